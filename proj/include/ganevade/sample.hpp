#pragma once

#include "ganevade/image_io.hpp"

namespace ganevade {

// One training pair: a GAN image and its simulated-real counterpart, with
// the detector scores recorded when the pair was built.
struct SamplePair {
    Image gan;
    Image simulated_real;
    double score_gan = 0.0;
    double score_sim = 0.0;
};

} // namespace ganevade
