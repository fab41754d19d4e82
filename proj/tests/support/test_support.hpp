#pragma once

#include "transeg/data/idx.hpp"
#include "transeg/translation_graph.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace transeg::testing {

/// Proposed-model preset for 8x8 single-channel inputs, under 5k parameters.
ArchitecturePreset tiny_preset();

/// Stroke-drawn 28x28 pseudo digits, class i % 10, deterministic in `seed`.
data::DigitSet synthetic_digits(std::size_t n, std::uint64_t seed);

/// Fresh empty directory below the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);

std::vector<double> to_doubles(const torch::Tensor& t);

/// |a - b| / max(|a|, |b|), 0 when both are 0.
double relative_error(double a, double b);

// Reference computations in plain double loops, independent of the library's
// tensor expressions.

double oracle_l1(const torch::Tensor& a, const torch::Tensor& b);
double oracle_dice_loss(const torch::Tensor& pred, const torch::Tensor& target);
double oracle_hinge_discriminator(const torch::Tensor& real, const torch::Tensor& fake);
double oracle_hinge_generator(const torch::Tensor& fake);

/// Random presence/absence bundles and discriminator scores with consistent shapes.
struct RandomObjective {
    PresenceBundle p;
    AbsenceBundle a;
    torch::Tensor fake_score_A;
    torch::Tensor fake_score_P;
    losses::SegTargets targets;
};

RandomObjective random_objective(std::uint64_t seed);

double oracle_reconstruction(const RandomObjective& r);
double oracle_latent(const RandomObjective& r);
double oracle_total(const RandomObjective& r, const losses::LossWeights& w);

}  // namespace transeg::testing
