#pragma once

#include "transeg/networks.hpp"

namespace transeg {

/// Everything computed from one presence batch x_P.
struct PresenceBundle {
    torch::Tensor x_P;
    LatentPair code_P;
    SkipStack skips;
    torch::Tensor x_PA;      ///< translation to the absence domain
    torch::Tensor delta_PA;  ///< residual that restores the target
    torch::Tensor x_PP;      ///< x_PA + delta_PA
    torch::Tensor y_seg;     ///< per-pixel probabilities
    torch::Tensor c_PA;      ///< common code of encode(x_PA)
    LatentPair code_PP;      ///< codes of encode(x_PP)
};

/// Everything computed from one absence batch x_A.
struct AbsenceBundle {
    torch::Tensor x_A;
    LatentPair code_A;
    SkipStack skips;
    torch::Tensor x_AA;       ///< autoencoding of x_A
    torch::Tensor u_sampled;  ///< unique code drawn from N(0, I)
    torch::Tensor x_AP;       ///< x_AA + residual(c_A, u_sampled)
    torch::Tensor x_APA;      ///< undefined when the cycle is disabled
    torch::Tensor c_AA;       ///< common code of encode(x_AA)
    LatentPair code_AP;       ///< codes of encode(x_AP)
};

}  // namespace transeg
