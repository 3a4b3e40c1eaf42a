#pragma once

#include <cstdint>
#include <span>
#include <string_view>
#include <vector>

#include "llp/mlp.hpp"
#include "llp/tensor.hpp"

namespace llp {

/// Probabilities are clamped to this floor before any log.
inline constexpr double kProbFloor = 1e-8;
/// Tolerance for accepting a vector as a point of the simplex.
inline constexpr double kSimplexTol = 1e-6;

enum class ConsistencyKind { none, pi_model, vat };

std::string_view to_string(ConsistencyKind kind);
ConsistencyKind consistency_kind_from_string(std::string_view name);

struct ConsistencySpec {
    ConsistencyKind kind = ConsistencyKind::none;
    double alpha = 0.0;          // maximum consistency weight
    double sigma = 0.1;          // Gaussian noise std (pi_model)
    double epsilon = 1.0;        // perturbation radius (vat)
    double xi = 1e-6;            // power-iteration probe scale (vat)
    std::size_t power_iters = 1; // (vat)
    std::size_t rampup_epochs = 0;
    // When true the clean prediction f(x) is a constant target for gradients.
    bool stop_gradient = true;

    /// Throws std::invalid_argument on a violated invariant.
    void validate() const;
};

/// Throws std::invalid_argument unless v is on the simplex within kSimplexTol.
void require_simplex(std::span<const double> v, std::string_view what);

/// Cross-entropy H(p, p_hat) with p_hat clamped to kProbFloor.
double proportion_loss(std::span<const double> p, std::span<const double> p_hat);

/// KL(a || b) after clamping both to kProbFloor and renormalizing.
double kl_divergence(std::span<const double> a, std::span<const double> b);

/// Mean over rows of ||f(x) - f(x + n)||^2 with n ~ N(0, sigma^2 I).
double pi_consistency(const MlpParams& params, const Tensor& X, double sigma, std::uint64_t seed);

struct VatPerturbation {
    Tensor r;                   // [batch x D]
    std::size_t fallbacks = 0;  // rows whose power iteration hit a zero gradient
};

/// Power-iteration approximation of argmax_{|r| <= eps} KL(f(x) || f(x + r)) for
/// every row of X. Each row's random start is derived from (seed, row index).
VatPerturbation vat_perturbations(const MlpParams& params, const Tensor& X, double epsilon, double xi,
                                  std::size_t power_iters, std::uint64_t seed);

struct VatRow {
    std::vector<double> r;
    bool fallback = false;
};

VatRow vat_perturbation(const MlpParams& params, std::span<const double> x, double epsilon, double xi,
                        std::size_t power_iters, std::uint64_t seed);

/// Mean over rows of KL(f(x) || f(x + r_adv)).
double vat_consistency(const MlpParams& params, const Tensor& X, const ConsistencySpec& spec, std::uint64_t seed);

/// alpha * exp(-5 (1 - min(t, T)/T)^2); alpha when T == 0.
double rampup_weight(std::size_t epoch, const ConsistencySpec& spec);

/// Perturbed copy of a bag together with the clean predictions it was built from.
struct PerturbedBatch {
    Tensor clean_probs;
    Tensor perturbed;
    std::size_t vat_fallbacks = 0;
};

PerturbedBatch perturb_batch(const MlpParams& params, const Tensor& X, const ConsistencySpec& spec,
                             std::uint64_t seed);

struct LossTerms {
    double total = 0.0;
    double proportion = 0.0;
    double consistency = 0.0;
    double weight = 0.0;
    std::size_t vat_fallbacks = 0;
    GradBundle grad;
};

/// L_prop + weight * L_cons with the perturbation held fixed. With
/// spec.stop_gradient the consistency target is batch.clean_probs; otherwise the
/// clean branch is recomputed from params and differentiated.
LossTerms evaluate_objective(const MlpParams& params, const Tensor& X, std::span<const double> p, double weight,
                             const ConsistencySpec& spec, const PerturbedBatch& batch);

/// Proportion loss only.
LossTerms evaluate_objective(const MlpParams& params, const Tensor& X, std::span<const double> p);

/// One bag's training objective and its parameter gradient.
LossTerms combined_loss(const MlpParams& params, const Tensor& X, std::span<const double> p, std::size_t epoch,
                        const ConsistencySpec& spec, std::uint64_t seed);

} // namespace llp
