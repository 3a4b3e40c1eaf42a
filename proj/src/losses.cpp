#include "llp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "llp/rng.hpp"

namespace llp {

std::string_view to_string(ConsistencyKind kind) {
    switch (kind) {
    case ConsistencyKind::none: return "none";
    case ConsistencyKind::pi_model: return "pi_model";
    case ConsistencyKind::vat: return "vat";
    }
    return "none";
}

ConsistencyKind consistency_kind_from_string(std::string_view name) {
    if (name == "none") return ConsistencyKind::none;
    if (name == "pi_model" || name == "pi") return ConsistencyKind::pi_model;
    if (name == "vat") return ConsistencyKind::vat;
    throw std::invalid_argument("unknown consistency kind '" + std::string(name) + "'");
}

void ConsistencySpec::validate() const {
    if (!(alpha >= 0.0)) throw std::invalid_argument("consistency alpha must be >= 0");
    if (kind == ConsistencyKind::vat) {
        if (!(epsilon > 0.0)) throw std::invalid_argument("VAT epsilon must be > 0");
        if (!(xi > 0.0)) throw std::invalid_argument("VAT xi must be > 0");
    }
    if (kind == ConsistencyKind::pi_model && !(sigma >= 0.0))
        throw std::invalid_argument("pi-model sigma must be >= 0");
    if (power_iters < 1) throw std::invalid_argument("power_iters must be >= 1");
}

void require_simplex(std::span<const double> v, std::string_view what) {
    double sum = 0.0;
    for (double x : v) {
        if (!std::isfinite(x) || x < -kSimplexTol)
            throw std::invalid_argument(std::string(what) + " has an entry off the simplex");
        sum += x;
    }
    if (v.empty() || std::abs(sum - 1.0) > kSimplexTol)
        throw std::invalid_argument(std::string(what) + " does not sum to 1");
}

double proportion_loss(std::span<const double> p, std::span<const double> p_hat) {
    if (p.size() != p_hat.size()) throw ShapeError("proportion vectors differ in length");
    require_simplex(p, "proportion label");
    require_simplex(p_hat, "estimated proportion");
    double loss = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i)
        if (p[i] != 0.0) loss -= p[i] * std::log(std::max(p_hat[i], kProbFloor));
    return loss;
}

namespace {

std::vector<double> clamp_renorm(std::span<const double> v) {
    std::vector<double> out(v.size());
    double s = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
        out[i] = std::max(v[i], kProbFloor);
        s += out[i];
    }
    for (double& x : out) x /= s;
    return out;
}

// Pulls a gradient w.r.t. clamp_renorm(v) back to v.
void clamp_renorm_backward(std::span<const double> v, std::span<const double> g_out, std::span<double> g_in) {
    double s = 0.0;
    for (double x : v) s += std::max(x, kProbFloor);
    double weighted = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) weighted += g_out[i] * std::max(v[i], kProbFloor);
    for (std::size_t i = 0; i < v.size(); ++i)
        g_in[i] = v[i] > kProbFloor ? g_out[i] / s - weighted / (s * s) : 0.0;
}

double kl_clamped(std::span<const double> a, std::span<const double> b) {
    const auto ca = clamp_renorm(a);
    const auto cb = clamp_renorm(b);
    double kl = 0.0;
    for (std::size_t i = 0; i < ca.size(); ++i) kl += ca[i] * (std::log(ca[i]) - std::log(cb[i]));
    return kl;
}

// d KL(a||b) / d b, through the clamp and renormalization of b.
void kl_grad_b(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    const auto ca = clamp_renorm(a);
    const auto cb = clamp_renorm(b);
    std::vector<double> g(cb.size());
    for (std::size_t i = 0; i < cb.size(); ++i) g[i] = -ca[i] / cb[i];
    clamp_renorm_backward(b, g, out);
}

// d KL(a||b) / d a, through the clamp and renormalization of a.
void kl_grad_a(std::span<const double> a, std::span<const double> b, std::span<double> out) {
    const auto ca = clamp_renorm(a);
    const auto cb = clamp_renorm(b);
    std::vector<double> g(ca.size());
    for (std::size_t i = 0; i < ca.size(); ++i) g[i] = std::log(ca[i]) + 1.0 - std::log(cb[i]);
    clamp_renorm_backward(a, g, out);
}

Tensor add_gaussian_noise(const Tensor& X, double sigma, std::uint64_t seed) {
    Tensor out = X;
    if (sigma == 0.0) return out;
    Rng rng(seed);
    for (double& v : out.values()) v += sigma * standard_normal(rng);
    return out;
}

double row_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

} // namespace

double kl_divergence(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw ShapeError("KL of vectors with different lengths");
    return kl_clamped(a, b);
}

double pi_consistency(const MlpParams& params, const Tensor& X, double sigma, std::uint64_t seed) {
    if (!(sigma >= 0.0)) throw std::invalid_argument("pi-model sigma must be >= 0");
    const Tensor clean = mlp_forward(params, X);
    const Tensor noisy = mlp_forward(params, add_gaussian_noise(X, sigma, seed));
    double total = 0.0;
    for (std::size_t i = 0; i < clean.size(); ++i) {
        const double d = noisy[i] - clean[i];
        total += d * d;
    }
    return total / static_cast<double>(X.rows());
}

VatPerturbation vat_perturbations(const MlpParams& params, const Tensor& X, double epsilon, double xi,
                                  std::size_t power_iters, std::uint64_t seed) {
    if (!(epsilon > 0.0) || !(xi > 0.0)) throw std::invalid_argument("VAT needs epsilon > 0 and xi > 0");
    if (power_iters < 1) throw std::invalid_argument("power_iters must be >= 1");
    const std::size_t n = X.rows();
    const std::size_t D = X.cols();
    const Tensor clean = mlp_forward(params, X);

    Tensor dir = Tensor::matrix(n, D);
    for (std::size_t r = 0; r < n; ++r) {
        Rng rng(derive_seed(seed, {r}));
        auto d = dir.row(r);
        double norm = 0.0;
        while (norm == 0.0) {
            for (double& v : d) v = standard_normal(rng);
            norm = row_norm(d);
        }
        for (double& v : d) v /= norm;
    }

    std::vector<bool> fell_back(n, false);
    for (std::size_t it = 0; it < power_iters; ++it) {
        Tensor probe = X;
        for (std::size_t i = 0; i < probe.size(); ++i) probe[i] += xi * dir[i];
        const ForwardCache cache = mlp_forward_cached(params, probe);
        Tensor upstream(cache.probs.shape(), 0.0);
        for (std::size_t r = 0; r < n; ++r) kl_grad_b(clean.row(r), cache.probs.row(r), upstream.row(r));
        const GradBundle g = backprop(params, cache, upstream, true);
        const Tensor& gin = *g.input;
        for (std::size_t r = 0; r < n; ++r) {
            auto gr = gin.row(r);
            const double norm = row_norm(gr);
            if (!(norm > 0.0) || !std::isfinite(norm)) {
                fell_back[r] = true;
                continue;
            }
            auto d = dir.row(r);
            for (std::size_t j = 0; j < D; ++j) d[j] = gr[j] / norm;
        }
    }

    // Power iteration fixes the direction only up to sign; keep whichever
    // end of the axis gives the larger divergence (ties keep +).
    Tensor plus = X;
    Tensor minus = X;
    for (std::size_t i = 0; i < plus.size(); ++i) {
        plus[i] += epsilon * dir[i];
        minus[i] -= epsilon * dir[i];
    }
    const Tensor p_plus = mlp_forward(params, plus);
    const Tensor p_minus = mlp_forward(params, minus);

    VatPerturbation out{Tensor::matrix(n, D), 0};
    for (std::size_t r = 0; r < n; ++r) {
        const double sign =
            kl_clamped(clean.row(r), p_minus.row(r)) > kl_clamped(clean.row(r), p_plus.row(r)) ? -1.0 : 1.0;
        auto d = dir.row(r);
        auto o = out.r.row(r);
        for (std::size_t j = 0; j < D; ++j) o[j] = sign * epsilon * d[j];
        if (fell_back[r]) ++out.fallbacks;
    }
    return out;
}

VatRow vat_perturbation(const MlpParams& params, std::span<const double> x, double epsilon, double xi,
                        std::size_t power_iters, std::uint64_t seed) {
    const Tensor X = Tensor::matrix(1, x.size(), std::vector<double>(x.begin(), x.end()));
    auto res = vat_perturbations(params, X, epsilon, xi, power_iters, seed);
    auto row = res.r.row(0);
    return {std::vector<double>(row.begin(), row.end()), res.fallbacks > 0};
}

double vat_consistency(const MlpParams& params, const Tensor& X, const ConsistencySpec& spec, std::uint64_t seed) {
    if (spec.kind != ConsistencyKind::vat) throw std::invalid_argument("vat_consistency needs a vat spec");
    const PerturbedBatch batch = perturb_batch(params, X, spec, seed);
    const Tensor noisy = mlp_forward(params, batch.perturbed);
    double total = 0.0;
    for (std::size_t r = 0; r < X.rows(); ++r) total += kl_clamped(batch.clean_probs.row(r), noisy.row(r));
    return total / static_cast<double>(X.rows());
}

double rampup_weight(std::size_t epoch, const ConsistencySpec& spec) {
    if (spec.rampup_epochs == 0 || epoch >= spec.rampup_epochs) return spec.alpha;
    const double phase = 1.0 - static_cast<double>(epoch) / static_cast<double>(spec.rampup_epochs);
    return spec.alpha * std::exp(-5.0 * phase * phase);
}

PerturbedBatch perturb_batch(const MlpParams& params, const Tensor& X, const ConsistencySpec& spec,
                             std::uint64_t seed) {
    PerturbedBatch batch;
    batch.clean_probs = mlp_forward(params, X);
    switch (spec.kind) {
    case ConsistencyKind::none: batch.perturbed = X; break;
    case ConsistencyKind::pi_model: batch.perturbed = add_gaussian_noise(X, spec.sigma, seed); break;
    case ConsistencyKind::vat: {
        auto vat = vat_perturbations(params, X, spec.epsilon, spec.xi, spec.power_iters, seed);
        batch.perturbed = X;
        for (std::size_t i = 0; i < X.size(); ++i) batch.perturbed[i] += vat.r[i];
        batch.vat_fallbacks = vat.fallbacks;
        break;
    }
    }
    return batch;
}

namespace {

// Proportion loss of the bag and its gradient w.r.t. each row's probabilities.
double proportion_term(const Tensor& probs, std::span<const double> p, Tensor& upstream) {
    const std::size_t n = probs.rows();
    const std::size_t L = probs.cols();
    if (p.size() != L) throw ShapeError("proportion label length does not match class count");
    std::vector<double> p_hat(L, 0.0);
    for (std::size_t r = 0; r < n; ++r) {
        auto row = probs.row(r);
        for (std::size_t j = 0; j < L; ++j) p_hat[j] += row[j];
    }
    const double count = static_cast<double>(n);
    for (double& v : p_hat) v /= count;
    const double loss = proportion_loss(p, p_hat);
    for (std::size_t j = 0; j < L; ++j) {
        const double g = p_hat[j] > kProbFloor ? -p[j] / (count * p_hat[j]) : 0.0;
        for (std::size_t r = 0; r < n; ++r) upstream(r, j) += g;
    }
    return loss;
}

} // namespace

LossTerms evaluate_objective(const MlpParams& params, const Tensor& X, std::span<const double> p) {
    if (X.rank() != 2 || X.rows() == 0) throw std::invalid_argument("bag must be non-empty");
    const ForwardCache clean = mlp_forward_cached(params, X);
    Tensor upstream(clean.probs.shape(), 0.0);
    LossTerms out;
    out.proportion = proportion_term(clean.probs, p, upstream);
    out.total = out.proportion;
    out.grad = backprop(params, clean, upstream);
    return out;
}

LossTerms evaluate_objective(const MlpParams& params, const Tensor& X, std::span<const double> p, double weight,
                             const ConsistencySpec& spec, const PerturbedBatch& batch) {
    if (spec.kind == ConsistencyKind::none || weight == 0.0) {
        LossTerms out = evaluate_objective(params, X, p);
        out.weight = weight;
        return out;
    }
    if (X.rows() == 0) throw std::invalid_argument("bag must be non-empty");
    if (!batch.perturbed.same_shape(X) || !batch.clean_probs.same_shape(Tensor::matrix(X.rows(), params.num_classes())))
        throw ShapeError("perturbed batch does not match the bag");

    const std::size_t n = X.rows();
    const std::size_t L = params.num_classes();
    const double count = static_cast<double>(n);

    const ForwardCache clean = mlp_forward_cached(params, X);
    const ForwardCache noisy = mlp_forward_cached(params, batch.perturbed);
    const Tensor& target = spec.stop_gradient ? batch.clean_probs : clean.probs;

    Tensor up_clean(clean.probs.shape(), 0.0);
    Tensor up_noisy(noisy.probs.shape(), 0.0);
    LossTerms out;
    out.weight = weight;
    out.vat_fallbacks = batch.vat_fallbacks;
    out.proportion = proportion_term(clean.probs, p, up_clean);

    double cons = 0.0;
    std::vector<double> g(L);
    for (std::size_t r = 0; r < n; ++r) {
        auto a = target.row(r);
        auto b = noisy.probs.row(r);
        if (spec.kind == ConsistencyKind::pi_model) {
            for (std::size_t j = 0; j < L; ++j) {
                const double d = b[j] - a[j];
                cons += d * d;
                up_noisy(r, j) += weight * 2.0 * d / count;
                if (!spec.stop_gradient) up_clean(r, j) -= weight * 2.0 * d / count;
            }
        } else {
            cons += kl_clamped(a, b);
            kl_grad_b(a, b, g);
            for (std::size_t j = 0; j < L; ++j) up_noisy(r, j) += weight * g[j] / count;
            if (!spec.stop_gradient) {
                kl_grad_a(a, b, g);
                for (std::size_t j = 0; j < L; ++j) up_clean(r, j) += weight * g[j] / count;
            }
        }
    }
    out.consistency = cons / count;
    out.total = out.proportion + weight * out.consistency;

    out.grad = backprop(params, clean, up_clean);
    out.grad.add_scaled(backprop(params, noisy, up_noisy), 1.0);
    return out;
}

LossTerms combined_loss(const MlpParams& params, const Tensor& X, std::span<const double> p, std::size_t epoch,
                        const ConsistencySpec& spec, std::uint64_t seed) {
    spec.validate();
    const double weight = spec.kind == ConsistencyKind::none ? 0.0 : rampup_weight(epoch, spec);
    if (weight == 0.0) {
        LossTerms out = evaluate_objective(params, X, p);
        out.weight = weight;
        return out;
    }
    const PerturbedBatch batch = perturb_batch(params, X, spec, seed);
    return evaluate_objective(params, X, p, weight, spec, batch);
}

} // namespace llp
