#include "mfac/io.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <charconv>
#include <fstream>
#include <iterator>
#include <sstream>

#include <openssl/evp.h>

#include "mfac/errors.hpp"

namespace mfac {

namespace {

std::string to_hex(const unsigned char* data, unsigned int n) {
  static const char* digits = "0123456789abcdef";
  std::string out;
  out.reserve(2 * n);
  for (unsigned int i = 0; i < n; ++i) {
    out.push_back(digits[data[i] >> 4]);
    out.push_back(digits[data[i] & 0xf]);
  }
  return out;
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::string sha256_hex(const std::string& bytes) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md.data(), &len, EVP_sha256(), nullptr) != 1)
    throw IoError("SHA-256 computation failed");
  return to_hex(md.data(), len);
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_all(path)); }

void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  std::error_code ec;
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create " + path.parent_path().string() + ": " + ec.message());
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp.string() + " into place: " + ec.message());
}

std::string format_double(double v) {
  std::array<char, 32> buf{};
  auto [end, err] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  if (err != std::errc()) return "nan";
  return std::string(buf.data(), end);
}

CsvWriter::CsvWriter(std::vector<std::string> header) : columns_(header.size()) {
  row(header);
  rows_ = 0;
}

void CsvWriter::row(const std::vector<std::string>& cells) {
  if (cells.size() != columns_) throw std::logic_error("CSV row has the wrong number of cells");
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) text_ += ',';
    text_ += cells[i];
  }
  text_ += '\n';
  ++rows_;
}

RunDirectory::RunDirectory(std::filesystem::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  std::filesystem::create_directories(dir_, ec);
  if (ec) throw IoError("cannot create output directory " + dir_.string() + ": " + ec.message());
  lock_ = dir_ / "run.lock";
  const int fd = ::open(lock_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0)
    throw IoError("output directory " + dir_.string() +
                  " is locked by another run (remove run.lock if that run is gone)");
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

RunDirectory::~RunDirectory() {
  std::error_code ec;
  std::filesystem::remove(lock_, ec);
}

void RunDirectory::write(const std::string& relative, const std::string& content) {
  write_file_atomic(dir_ / relative, content);
  track(relative);
}

void RunDirectory::track(const std::string& relative) {
  if (std::find(files_.begin(), files_.end(), relative) == files_.end()) files_.push_back(relative);
}

void RunDirectory::write_manifest(Json manifest) {
  Json index = Json::array();
  for (const auto& f : files_) {
    const auto p = dir_ / f;
    index.push_back({{"path", f},
                     {"bytes", static_cast<std::uint64_t>(std::filesystem::file_size(p))},
                     {"sha256", sha256_file(p)}});
  }
  manifest["files"] = index;
  write_file_atomic(dir_ / "manifest.json", manifest.dump(2) + "\n");
}

std::vector<std::string> check_manifest(const std::filesystem::path& dir) {
  const auto manifest = Json::parse(read_all(dir / "manifest.json"));
  std::vector<std::string> bad;
  for (const auto& f : manifest.at("files")) {
    const auto rel = f.at("path").get<std::string>();
    const auto p = dir / rel;
    if (!std::filesystem::exists(p) || sha256_file(p) != f.at("sha256").get<std::string>())
      bad.push_back(rel);
  }
  return bad;
}

}  // namespace mfac
