#pragma once

#include <string>

#include "rotla/autodiff.hpp"
#include "rotla/model.hpp"

namespace rotla::checkpoint {

/// Flat named-tensor archive: a fixed magic + version header, then per
/// tensor (name, dtype, shape, raw little-endian payload). dtype follows
/// the requested storage precision (f64 or f32).
void save(const std::string& path, const model::Parameters& params,
          ad::Precision precision = ad::Precision::f64);

model::Parameters load(const std::string& path);

}  // namespace rotla::checkpoint
