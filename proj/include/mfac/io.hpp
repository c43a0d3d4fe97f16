#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "mfac/config.hpp"

namespace mfac {

/// Hex SHA-256 of a file's bytes. Throws IoError.
std::string sha256_file(const std::filesystem::path& path);
std::string sha256_hex(const std::string& bytes);

/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, const std::string& content);

/// Shortest round-trip text for a double.
std::string format_double(double v);

/// Minimal CSV assembly; cells are written verbatim.
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> header);
  void row(const std::vector<std::string>& cells);
  std::string str() const { return text_; }
  std::size_t rows() const { return rows_; }

 private:
  std::size_t columns_;
  std::size_t rows_ = 0;
  std::string text_;
};

/// An output directory owned by this process for its lifetime (a lock file
/// is held). Files written through it are indexed for the manifest.
class RunDirectory {
 public:
  explicit RunDirectory(std::filesystem::path dir);
  ~RunDirectory();
  RunDirectory(const RunDirectory&) = delete;
  RunDirectory& operator=(const RunDirectory&) = delete;

  const std::filesystem::path& path() const { return dir_; }

  /// Writes `relative` atomically and records it in the file index.
  void write(const std::string& relative, const std::string& content);
  /// Records an already written file.
  void track(const std::string& relative);

  /// Writes manifest.json: the given fields plus a "files" index holding each
  /// tracked file's size and SHA-256.
  void write_manifest(Json manifest);

 private:
  std::filesystem::path dir_;
  std::filesystem::path lock_;
  std::vector<std::string> files_;
};

/// Recomputes every digest listed in a manifest; returns the mismatching or
/// missing paths.
std::vector<std::string> check_manifest(const std::filesystem::path& dir);

}  // namespace mfac
