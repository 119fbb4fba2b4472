#pragma once

// Generator files from data/, compiled in at build time.

#include <string>
#include <utility>
#include <vector>

namespace mmfc {

/// (name, JSON text) pairs.
const std::vector<std::pair<std::string, std::string>>& embedded_generators();

}  // namespace mmfc
