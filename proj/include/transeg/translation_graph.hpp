#pragma once

#include "transeg/bundles.hpp"
#include "transeg/losses.hpp"

#include <ATen/core/Generator.h>

#include <memory>
#include <string>

namespace transeg {

enum class VariantKind { proposed, ae_baseline, seg_only };

std::string to_string(VariantKind kind);
VariantKind variant_from_string(const std::string& name);

/// AMSGrad settings; the discriminator learns 10x faster by default.
struct OptimizerConfig {
    double lr_generator = 1e-4;
    double lr_discriminator = 1e-3;
    double beta1 = 0.5;
    double beta2 = 0.999;
    double weight_decay = 1e-4;
    bool amsgrad = true;
};

/// Encoder, decoders, segmentation normalization and (for the proposed
/// variant) the two domain discriminators.
///
/// Every variant has an encoder and a residual-architecture decoder with long
/// skips and a classification layer. The AE baseline adds a skip-free
/// reconstruction decoder; the proposed model adds the common decoder, the
/// segmentation normalization state and the discriminators D_A, D_P.
class SegTransModelImpl : public torch::nn::Module {
public:
    SegTransModelImpl(const ArchitecturePreset& preset, VariantKind kind);

    VariantKind kind() const { return kind_; }
    const ArchitecturePreset& preset() const { return preset_; }

    Encoded encode(const torch::Tensor& x);
    torch::Tensor decode_common(const torch::Tensor& common, const SkipStack& skips);
    torch::Tensor decode_residual(const torch::Tensor& common, const torch::Tensor& unique,
                                  const SkipStack& skips);
    torch::Tensor decode_segmentation(const torch::Tensor& common, const torch::Tensor& unique,
                                      const SkipStack& skips, SegNormStateImpl& seg_norm);
    /// Baseline reconstruction (no long skips) from the full latent code.
    torch::Tensor reconstruct(const torch::Tensor& latent);
    torch::Tensor discriminate(const torch::Tensor& x, Domain which);

    /// Variant-aware segmentation probabilities for a batch of images.
    torch::Tensor segmentation_probabilities(const torch::Tensor& x);

    std::vector<torch::Tensor> generator_parameters();
    std::vector<torch::Tensor> discriminator_parameters();

    /// One power iteration for every spectrally normalized weight of every network.
    void advance_spectral_norm(int n_iters = 1);

    Encoder encoder{nullptr};
    Decoder residual{nullptr};
    Decoder common{nullptr};
    Decoder reconstruction{nullptr};
    SegNormState seg_norm{nullptr};
    MultiScaleDiscriminator disc_A{nullptr};
    MultiScaleDiscriminator disc_P{nullptr};

private:
    ArchitecturePreset preset_;
    VariantKind kind_;
};
TORCH_MODULE(SegTransModel);

/// Seeds torch, builds the model, applies Kaiming-normal init.
SegTransModel make_model(const ArchitecturePreset& preset, VariantKind kind, std::uint64_t seed);

at::Generator make_generator(std::uint64_t seed);

/// i.i.d. standard-normal unique code; advances `gen`.
torch::Tensor sample_unique(at::IntArrayRef shape, at::Generator& gen,
                            const torch::TensorOptions& options = {});

PresenceBundle forward_presence(SegTransModelImpl& model, const torch::Tensor& x_P);
AbsenceBundle forward_absence(SegTransModelImpl& model, const torch::Tensor& x_A,
                              at::Generator& gen, bool cycle_enabled);

/// Binary mask (B, 1, H, W) as float 0/1, with y_seg >= threshold counted as foreground.
torch::Tensor segment(SegTransModelImpl& model, const torch::Tensor& x, double threshold = 0.5);

struct TrainingBatch {
    torch::Tensor x_P;
    torch::Tensor x_A;
    losses::SegTargets targets;
};

struct StepReport {
    losses::LossReport losses;
    bool discriminator_updated = false;
    bool generator_updated = false;
    std::int64_t n_labeled = 0;
};

/// Model, optimizers, sampling stream and objective weights for one run.
struct TrainingState {
    TrainingState(SegTransModel model, const OptimizerConfig& opt, const losses::LossWeights& weights,
                  std::uint64_t sampling_seed);

    SegTransModel model;
    OptimizerConfig optimizer_config;
    losses::LossWeights weights;
    std::unique_ptr<torch::optim::Adam> generator_optimizer;
    std::unique_ptr<torch::optim::Adam> discriminator_optimizer;
    at::Generator generator;
};

/// One discriminator update (proposed variant only) followed by one generator
/// update on a fresh forward pass. Throws NonFiniteLossError on NaN/Inf.
StepReport training_step(TrainingState& state, const TrainingBatch& batch);

/// Discriminator half of training_step (proposed variant). Returns the hinge loss.
double discriminator_step(TrainingState& state, const TrainingBatch& batch);

/// Generator half of training_step.
losses::LossReport generator_step(TrainingState& state, const TrainingBatch& batch,
                                  bool* updated = nullptr);

/// The generator objective as a differentiable scalar for the given batch.
/// Discriminators are evaluated but not updated.
losses::GeneratorLoss generator_objective(SegTransModelImpl& model, const TrainingBatch& batch,
                                          const losses::LossWeights& weights, at::Generator& gen);

}  // namespace transeg
