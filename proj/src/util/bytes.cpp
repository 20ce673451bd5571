// SPDX-License-Identifier: Apache-2.0
#include "util/bytes.hpp"

#include <fstream>

namespace tunlm {

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open file: " + path.string());
  std::string data((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  if (in.bad()) throw std::runtime_error("failed reading file: " + path.string());
  return data;
}

void atomic_write_file(const std::filesystem::path& path, std::string_view data) {
  namespace fs = std::filesystem;
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open file for writing: " + tmp.string());
    out.write(data.data(), static_cast<std::streamsize>(data.size()));
    out.flush();
    if (!out) throw std::runtime_error("failed writing file: " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace tunlm
