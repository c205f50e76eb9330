#pragma once

#include <cstdint>
#include <vector>

#include "objclear/annotator.hpp"
#include "objclear/toynet.hpp"

namespace objclear {

/// A procedurally rendered counterfactual scene with its exact annotations.
struct ProceduralScene {
    CounterfactualPair pair;
    Mask effect_mask;
    Mask object_effect_mask;
    int direction_bin = 0;
    double shadow_factor = 1.0;
};

struct CorpusConfig {
    int side = 32;
    int min_object = 7;
    int max_object = 12;
    int min_shadow_length = 4;
    int max_shadow_length = 7;
    double min_shadow_factor = 0.4;
    double max_shadow_factor = 0.7;
    double background_noise = 0.03;
};

/// Flat background with mild noise, one rectangle or ellipse, and a cast
/// shadow (multiplicative darkening) smeared along the direction bin.
ProceduralScene render_scene(std::uint64_t seed, std::uint64_t index, const CorpusConfig& cfg = {});

std::vector<ProceduralScene> render_corpus(std::uint64_t seed, int count, const CorpusConfig& cfg = {});

/// Training item built from a scene and an annotation of it.
toynet::TrainItem to_train_item(const ProceduralScene& scene, const Mask& object_effect_mask);

}  // namespace objclear
