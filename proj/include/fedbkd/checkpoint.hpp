#pragma once

#include <filesystem>

#include "fedbkd/model.hpp"

namespace fedbkd {

// Flat binary archive: architecture descriptor text record followed by
// name -> (shape header, little-endian f64 payload) entries. Round-trips
// bit-exactly.
void save_checkpoint(const LayeredModel& model, const std::filesystem::path& path);
LayeredModel load_checkpoint(const std::filesystem::path& path);

} // namespace fedbkd
