#pragma once

#include <cstdint>
#include <string>

#include "flowsr/core/image.hpp"
#include "flowsr/core/rng.hpp"

namespace flowsr::data {

// Procedural high-resolution content families. Stand-ins for photographic
// corpora so datasets are hermetic and exactly reproducible.
enum class GeneratorKind { gradients, textures, shapes, textlike };

GeneratorKind generator_kind_from_string(const std::string& name);
const char* generator_kind_name(GeneratorKind kind);

// Deterministic in (kind, size, channels, seed); output intensities in [0,1].
ImageF generate_hr(GeneratorKind kind, int size, int channels, std::uint64_t seed);

}  // namespace flowsr::data
