#include "moehealth/io.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>
#include <system_error>

#include "moehealth/digest.hpp"
#include "moehealth/errors.hpp"

namespace moehealth {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw IoError("cannot open " + path + " for reading");
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  if (in.bad()) {
    throw IoError("read failed on " + path);
  }
  return buffer.str();
}

void write_text_atomic(const std::string& path, const std::string& content) {
  const std::filesystem::path target(path);
  std::error_code ec;
  if (target.has_parent_path()) {
    std::filesystem::create_directories(target.parent_path(), ec);
    if (ec) {
      throw IoError("cannot create directory " + target.parent_path().string() + ": " +
                    ec.message());
    }
  }
  const std::filesystem::path temp = target.string() + ".tmp";
  {
    std::ofstream out(temp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw IoError("cannot open " + temp.string() + " for writing");
    }
    out << content;
    out.flush();
    if (!out) {
      throw IoError("write failed on " + temp.string());
    }
  }
  std::filesystem::rename(temp, target, ec);
  if (ec) {
    std::filesystem::remove(temp);
    throw IoError("cannot move " + temp.string() + " into place: " + ec.message());
  }
}

std::string file_digest(const std::string& path) { return digest_hex(read_text(path)); }

}  // namespace moehealth
