#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "gssl/augment.hpp"
#include "gssl/data.hpp"
#include "gssl/losses.hpp"
#include "gssl/model.hpp"
#include "gssl/uncertainty.hpp"

namespace gssl {

enum class Ablation {
    none,
    no_ssl,
    no_target,
    gamma_neg_inf,
    sym_param,
    sym_nonparam,
    no_reg_losses,
    mcd_ssl,
    soft_mask,
    per_class_gamma,
};

std::string_view ablation_name(Ablation a);
// Throws std::invalid_argument listing the valid names.
Ablation parse_ablation(std::string_view name);
const std::vector<Ablation>& all_ablations();

struct TrainConfig {
    std::uint64_t seed = 1;
    std::size_t steps_pretrain = 300;
    std::size_t steps_ssl = 300;
    std::size_t batch_source = 4;
    std::size_t batch_target = 4;
    std::size_t prototype_batch = 4;  // leading source images used for prototypes
    double learning_rate = 0.02;      // pretraining
    double ssl_learning_rate = 0.02;  // SSL stages
    double momentum = 0.9;
    double grad_clip = 0.0;           // global gradient-norm cap; 0 disables
    LossWeights weights;
    double pretrain_uniformity = 1.0;  // λ_u during pretraining
    Ablation ablation = Ablation::none;
    std::vector<std::string> curriculum;  // unlabelled domains, in order
    double dropout_p = 0.2;               // mcd_ssl only
    std::size_t checkpoint_interval = 0;  // 0: only at the end of each phase
};

// SGD with momentum: v ← μv + g; θ ← θ − lr·v. With clip > 0 the gradient
// is first rescaled so its global L2 norm is at most clip.
class SgdMomentum {
public:
    SgdMomentum(double learning_rate, double momentum, double clip = 0.0);
    void step(std::vector<Parameter>& params);
    void zero_grad(std::vector<Parameter>& params) const;

private:
    double lr_;
    double momentum_;
    double clip_;
    std::vector<std::vector<double>> velocity_;
};

struct StepResult {
    LossReport losses;
    MaskPair masks;
    double dominant_fraction = 0.0;  // largest share of target pixels on one class
    bool skipped = false;
};

struct TrainLogRow {
    std::size_t step = 0;
    LossReport losses;
    double gamma = 0.0;
    double p_consistent = 0.0;
    double dominant_fraction = 0.0;
};

void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& rows);

// Identifies a phase in the seed derivation so phases draw independent streams.
struct StepContext {
    std::uint64_t phase = 0;
    std::uint64_t step = 0;
};

// One gradient step on λ_s·L_s + λ_u·L_u with L_u on source embeddings.
LossReport pretrain_step(ModelState& m, SgdMomentum& opt, const Dataset& source,
                         const TrainConfig& cfg, const AugmentConfig& aug, StepContext ctx);

// Masks from the current weights, then one gradient step on the weighted total.
StepResult ssl_step(ModelState& m, SgdMomentum& opt, const Dataset& source, const Dataset& target,
                    const TrainConfig& cfg, const AugmentConfig& aug, StepContext ctx);

// Rounds parameters and prototypes to 32-bit floats, as stored in checkpoints.
void quantize_to_storage(ModelState& m);

}  // namespace gssl
