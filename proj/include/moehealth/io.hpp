#pragma once

#include <string>

namespace moehealth {

/// Whole-file read; throws IoError when the file cannot be opened or read.
std::string read_text(const std::string& path);

/// Writes via a sibling temp file plus rename, so readers never observe a
/// partially written artifact. Creates parent directories as needed. Throws
/// IoError on failure.
void write_text_atomic(const std::string& path, const std::string& content);

/// FNV-1a hex digest of the file's raw bytes.
std::string file_digest(const std::string& path);

}  // namespace moehealth
