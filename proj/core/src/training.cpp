#include "gssl/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <limits>
#include <ostream>
#include <stdexcept>

#include "gssl/ops.hpp"
#include "gssl/rng.hpp"

namespace gssl {

namespace {

constexpr std::pair<Ablation, std::string_view> kAblationNames[] = {
    {Ablation::none, "none"},
    {Ablation::no_ssl, "no_ssl"},
    {Ablation::no_target, "no_target"},
    {Ablation::gamma_neg_inf, "gamma_neg_inf"},
    {Ablation::sym_param, "sym_param"},
    {Ablation::sym_nonparam, "sym_nonparam"},
    {Ablation::no_reg_losses, "no_reg_losses"},
    {Ablation::mcd_ssl, "mcd_ssl"},
    {Ablation::soft_mask, "soft_mask"},
    {Ablation::per_class_gamma, "per_class_gamma"},
};

// Stream tags under a step's base seed.
enum Stream : std::uint64_t {
    kSourceIndices = 1,
    kTargetIndices = 2,
    kDropoutFirst = 3,
    kDropoutSecond = 4,
    kSourceAugment = 1000,
    kTargetPlan = 2000,
};

std::vector<std::size_t> sample_indices(std::size_t population, std::size_t count, std::uint64_t seed) {
    if (population == 0) throw std::invalid_argument("training: empty dataset");
    Rng rng(seed);
    std::vector<std::size_t> out;
    if (count <= population) {
        std::vector<std::size_t> order(population);
        for (std::size_t i = 0; i < population; ++i) order[i] = i;
        for (std::size_t i = 0; i < count; ++i) {
            std::swap(order[i], order[i + rng.uniform_index(population - i)]);
            out.push_back(order[i]);
        }
    } else {
        for (std::size_t i = 0; i < count; ++i) out.push_back(rng.uniform_index(population));
    }
    return out;
}

struct LabelledBatch {
    Tensor images;
    std::vector<std::int32_t> labels;
};

LabelledBatch sample_source(const Dataset& source, std::size_t count, const AugmentConfig& aug,
                            std::uint64_t base) {
    if (!source.has_labels()) throw std::invalid_argument("training: source dataset has no labels");
    const auto idx = sample_indices(source.size(), count, derive_seed(base, kSourceIndices));
    const std::size_t e = source.extent;
    std::vector<double> px;
    LabelledBatch b;
    for (std::size_t i = 0; i < idx.size(); ++i) {
        const auto s = augment_labelled(source.images[idx[i]], source.labels[idx[i]],
                                        derive_seed(base, kSourceAugment + i), aug);
        px.insert(px.end(), s.image.data().begin(), s.image.data().end());
        b.labels.insert(b.labels.end(), s.labels.begin(), s.labels.end());
    }
    b.images = Tensor::from_vector({idx.size(), 3, e, e}, std::move(px));
    return b;
}

Tensor scaled_sum(std::initializer_list<std::pair<double, Tensor>> terms) {
    Tensor total;
    for (const auto& [w, t] : terms) {
        if (w == 0.0 || !t.defined()) continue;
        const Tensor term = ops::scale(t, w);
        total = total.defined() ? ops::add(total, term) : term;
    }
    return total.defined() ? total : Tensor::scalar(0.0);
}

void check_finite(const LossReport& r, std::size_t step, const char* phase) {
    if (std::isfinite(r.total)) return;
    std::fprintf(stderr,
                 "%s step %zu produced a non-finite loss: l_c=%g l_u=%g l_p=%g l_s=%g n_certain=%zu\n",
                 phase, step, r.l_c, r.l_u, r.l_p, r.l_s, r.n_certain);
    throw std::runtime_error(std::string(phase) + " step " + std::to_string(step) +
                             ": non-finite loss");
}

void backward_and_step(const Tensor& total, ModelState& m, SgdMomentum& opt) {
    opt.zero_grad(m.params);
    total.backward();
    opt.step(m.params);
}

// Source labels restricted to the first `keep` images; the rest become void.
std::vector<std::int32_t> prototype_labels(const std::vector<std::int32_t>& down, std::size_t n,
                                           std::size_t keep) {
    std::vector<std::int32_t> out = down;
    const std::size_t per = down.size() / n;
    for (std::size_t i = std::min(keep, n) * per; i < out.size(); ++i) out[i] = kVoidLabel;
    return out;
}

}  // namespace

std::string_view ablation_name(Ablation a) {
    for (const auto& [value, name] : kAblationNames) {
        if (value == a) return name;
    }
    return "unknown";
}

Ablation parse_ablation(std::string_view name) {
    std::string valid;
    for (const auto& [value, n] : kAblationNames) {
        if (n == name) return value;
        valid += (valid.empty() ? "" : ", ") + std::string(n);
    }
    throw std::invalid_argument("unknown ablation '" + std::string(name) + "' (expected one of " +
                                valid + ")");
}

const std::vector<Ablation>& all_ablations() {
    static const std::vector<Ablation> list = [] {
        std::vector<Ablation> v;
        for (const auto& [value, name] : kAblationNames) v.push_back(value);
        return v;
    }();
    return list;
}

SgdMomentum::SgdMomentum(double learning_rate, double momentum, double clip)
    : lr_(learning_rate), momentum_(momentum), clip_(clip) {}

void SgdMomentum::zero_grad(std::vector<Parameter>& params) const {
    for (auto& p : params) p.value.zero_grad();
}

void SgdMomentum::step(std::vector<Parameter>& params) {
    if (velocity_.size() != params.size()) {
        velocity_.assign(params.size(), {});
        for (std::size_t i = 0; i < params.size(); ++i) velocity_[i].assign(params[i].value.numel(), 0.0);
    }
    double factor = 1.0;
    if (clip_ > 0.0) {
        double sq = 0.0;
        for (const auto& p : params) {
            if (!p.value.has_grad()) continue;
            for (double g : p.value.grad()) sq += g * g;
        }
        const double norm = std::sqrt(sq);
        if (norm > clip_) factor = clip_ / norm;
    }
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor& t = params[i].value;
        if (!t.has_grad()) continue;
        const auto g = t.grad();
        auto v = std::span<double>(velocity_[i]);
        auto d = t.mutable_data();
        for (std::size_t j = 0; j < d.size(); ++j) {
            v[j] = momentum_ * v[j] + factor * g[j];
            d[j] -= lr_ * v[j];
        }
    }
}

void write_train_log(std::ostream& os, const std::vector<TrainLogRow>& rows) {
    os << "step,l_c,l_u,l_p,l_s,total,n_certain,gamma,p_consistent,dominant_fraction\n";
    char buf[512];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%zu,%.17g,%.17g,%.17g,%.17g,%.17g,%zu,%.17g,%.17g,%.17g\n",
                      r.step, r.losses.l_c, r.losses.l_u, r.losses.l_p, r.losses.l_s,
                      r.losses.total, r.losses.n_certain, r.gamma, r.p_consistent,
                      r.dominant_fraction);
        os << buf;
    }
}

LossReport pretrain_step(ModelState& m, SgdMomentum& opt, const Dataset& source,
                         const TrainConfig& cfg, const AugmentConfig& aug, StepContext ctx) {
    const std::uint64_t base = derive_seed(cfg.seed, (ctx.phase << 32) ^ ctx.step);
    const LabelledBatch batch = sample_source(source, cfg.batch_source, aug, base);
    const std::size_t n = batch.images.dim(0), e = source.extent;

    const Tensor features = encode(batch.images, m);
    const Tensor probs = segment_probs(head_scores(features, m), e, e, m.config.head_tau);
    const Tensor l_s = loss_supervised(probs, batch.labels).value;
    const Tensor z = project(features, m);
    const Tensor l_u = loss_uniformity(z);

    const auto down = downsample_labels(batch.labels, n, e, e, z.dim(2), z.dim(3));
    {
        NoGradGuard no_grad;
        m.bank = compute_prototypes(z, prototype_labels(down, n, cfg.prototype_batch), m.bank).bank;
    }

    LossWeights weights = cfg.weights;
    weights.uniformity = cfg.pretrain_uniformity;
    LossReport report = total_loss(0.0, l_u.item(), 0.0, l_s.item(), weights);
    report.weights.consistency = 0.0;
    report.weights.prototype = 0.0;
    check_finite(report, ctx.step, "pretrain");
    const Tensor total = scaled_sum({{cfg.weights.supervised, l_s}, {cfg.pretrain_uniformity, l_u}});
    backward_and_step(total, m, opt);
    return report;
}

StepResult ssl_step(ModelState& m, SgdMomentum& opt, const Dataset& source, const Dataset& target,
                    const TrainConfig& cfg, const AugmentConfig& aug, StepContext ctx) {
    const Ablation ab = cfg.ablation;
    const std::uint64_t base = derive_seed(cfg.seed, (ctx.phase << 32) ^ ctx.step);
    const std::size_t e = source.extent;
    if (target.extent != e) {
        throw std::invalid_argument("ssl_step: source and target extents differ");
    }
    StepResult result;

    // Source branch: supervised loss and in-graph prototypes.
    const LabelledBatch src = sample_source(source, cfg.batch_source, aug, base);
    const std::size_t ns = src.images.dim(0);
    const Tensor src_features = encode(src.images, m);
    const Tensor src_probs = segment_probs(head_scores(src_features, m), e, e, m.config.head_tau);
    const Tensor l_s = loss_supervised(src_probs, src.labels).value;
    const Tensor src_z = project(src_features, m);
    const auto down = downsample_labels(src.labels, ns, e, e, src_z.dim(2), src_z.dim(3));
    PrototypeUpdate update =
        compute_prototypes(src_z, prototype_labels(down, ns, cfg.prototype_batch), m.bank);
    if (!update.bank.all_available()) {
        std::fprintf(stderr, "ssl step %llu skipped: a prototype class is unavailable\n",
                     static_cast<unsigned long long>(ctx.step));
        result.skipped = true;
        return result;
    }
    m.bank = update.bank;
    const Tensor frozen_prototypes = update.prototypes.detach();

    // Target views.
    const Dataset& stream = ab == Ablation::no_target ? source : target;
    const auto tidx = sample_indices(stream.size(), cfg.batch_target, derive_seed(base, kTargetIndices));
    const std::size_t nt = tidx.size();
    std::vector<ViewPlan> plans;
    Tensor low_first, low_second, target_z;
    bool first_is_prototype = ab == Ablation::sym_nonparam;
    bool second_is_prototype = ab != Ablation::sym_param;
    if (ab == Ablation::mcd_ssl) {
        first_is_prototype = false;
        second_is_prototype = true;
        const Tensor x = stack_images(stream, tidx);
        const Tensor features = encode(x, m);
        const std::size_t count = features.numel();
        const Tensor d1 = ops::dropout(features, cfg.dropout_p, derive_seed(base, kDropoutFirst));
        const Tensor d2 = ops::dropout(features, cfg.dropout_p, derive_seed(base, kDropoutSecond), count);
        low_first = head_scores(d1, m, true);
        target_z = project(d2, m);
        low_second = prototype_scores(target_z, frozen_prototypes);
        for (std::size_t i = 0; i < nt; ++i) {
            ViewPlan p;
            p.view_h = e;
            p.view_w = e;
            p.local_crop = full_rect(e, e);
            plans.push_back(p);
        }
    } else {
        std::vector<double> px1, px2;
        for (std::size_t i = 0; i < nt; ++i) {
            plans.push_back(sample_view_plan(derive_seed(base, kTargetPlan + i), e, e, aug));
            const auto [v1, v2] = render_views(stream.images[tidx[i]], plans.back());
            px1.insert(px1.end(), v1.data().begin(), v1.data().end());
            px2.insert(px2.end(), v2.data().begin(), v2.data().end());
        }
        const Tensor f1 = encode(Tensor::from_vector({nt, 3, e, e}, std::move(px1)), m);
        const Tensor f2 = encode(Tensor::from_vector({nt, 3, e, e}, std::move(px2)), m);
        target_z = project(f2, m);
        low_first = first_is_prototype ? prototype_scores(project(f1, m), frozen_prototypes)
                                       : head_scores(f1, m, true);
        low_second = second_is_prototype ? prototype_scores(target_z, frozen_prototypes)
                                         : head_scores(f2, m, true);
    }
    const auto [aligned_first, aligned_second] =
        align_scores(ops::upsample_bilinear(low_first, e, e), ops::upsample_bilinear(low_second, e, e), plans);
    const double tau_first = first_is_prototype ? m.config.tau : m.config.head_tau;
    const double tau_second = second_is_prototype ? m.config.tau : m.config.head_tau;
    const Tensor p_first = ops::softmax(aligned_first, 1, tau_first);
    const Tensor p_second = ops::softmax(aligned_second, 1, tau_second);

    // Step 1: masks from the current weights.
    MaskPair& masks = result.masks;
    masks.consistency = consistency_mask(aligned_first, aligned_second);
    masks.p_consistent = masks.consistency.fraction();
    double gamma = calculate_gamma(masks.consistency, aligned_second);
    std::vector<double> weights;
    switch (ab) {
        case Ablation::gamma_neg_inf:
            gamma = -1.0;
            masks.certainty = certainty_mask(aligned_second, -std::numeric_limits<double>::infinity());
            break;
        case Ablation::per_class_gamma:
            m.class_gamma = calculate_gamma_per_class(masks.consistency, aligned_second, m.class_gamma);
            masks.certainty = certainty_mask_per_class(aligned_second, m.class_gamma);
            break;
        default:
            masks.certainty = certainty_mask(aligned_second, gamma);
            break;
    }
    if (ab == Ablation::soft_mask) {
        weights = soft_certainty_mask(p_second);
    } else {
        weights.assign(masks.certainty.values.begin(), masks.certainty.values.end());
    }
    masks.gamma_used = gamma;
    masks.p_certain = masks.certainty.fraction();

    {
        const auto classes = argmax_classes(aligned_second);
        std::vector<std::size_t> counts(m.config.num_classes, 0);
        for (auto c : classes) ++counts[c];
        result.dominant_fraction = static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
                                   static_cast<double>(classes.size());
    }

    // Step 2: gradient step on the weighted total.
    const Tensor l_c = loss_consistency(p_first, p_second, weights);
    const bool regularize = ab != Ablation::no_reg_losses;
    const Tensor l_u = regularize ? loss_uniformity(target_z) : Tensor::scalar(0.0);
    const Tensor l_p = regularize ? loss_prototype(update.prototypes) : Tensor::scalar(0.0);
    result.losses = total_loss(l_c.item(), l_u.item(), l_p.item(), l_s.item(), cfg.weights);
    result.losses.n_certain = masks.certainty.count();
    check_finite(result.losses, ctx.step, "ssl");
    const Tensor total = scaled_sum({{cfg.weights.consistency, l_c},
                                     {cfg.weights.uniformity, l_u},
                                     {cfg.weights.prototype, l_p},
                                     {cfg.weights.supervised, l_s}});
    backward_and_step(total, m, opt);
    m.gamma = gamma;
    return result;
}

void quantize_to_storage(ModelState& m) {
    auto round_all = [](Tensor& t) {
        for (auto& v : t.mutable_data()) v = static_cast<float>(v);
    };
    for (auto& p : m.params) round_all(p.value);
    round_all(m.bank.vectors);
    round_all(m.bank.history);
}

}  // namespace gssl
