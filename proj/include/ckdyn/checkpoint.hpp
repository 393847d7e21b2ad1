#pragma once

// Checkpoint file: one JSON header line (config, seed, parameter names and
// shapes) followed by each parameter's values as little-endian float64, in
// header order.

#include <filesystem>
#include <iosfwd>

#include "ckdyn/architectures.hpp"

namespace ckdyn {

void save_checkpoint(const Network& net, std::ostream& os);
void save_checkpoint(const Network& net, const std::filesystem::path& path);

/// Throws ParseError on a malformed header, a parameter list that does not
/// match the stored config, or a short payload.
Network load_checkpoint(std::istream& is);
Network load_checkpoint(const std::filesystem::path& path);

}  // namespace ckdyn
