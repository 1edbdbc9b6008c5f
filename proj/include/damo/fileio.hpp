#pragma once

#include <string>

namespace damo {

// Writes to a temporary sibling and renames it over `path`.
void atomic_write(const std::string& path, const std::string& content);
std::string read_file(const std::string& path);

}  // namespace damo
