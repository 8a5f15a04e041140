#include "mccir/estimators.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <utility>

#include "mccir/errors.hpp"

namespace mccir {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double inf_norm(const Vector& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::fabs(x));
    return m;
}

Vector counts_to_doubles(const Observation& r) {
    Vector out(r.counts.size());
    for (std::size_t i = 0; i < r.counts.size(); ++i) {
        if (r.counts[i] < 0) throw std::invalid_argument("counts must be non-negative");
        out[i] = static_cast<double>(r.counts[i]);
    }
    return out;
}

void check_dims(const Observation& r, const DesignMatrix& s) {
    if (r.counts.size() != s.m.rows)
        throw std::invalid_argument("observation length does not match the design matrix");
}

// Design restricted to the support's columns.
struct ReducedDesign {
    Matrix a;
    std::vector<std::size_t> cols;
    std::vector<char> row_nonzero;
};

ReducedDesign reduce(const DesignMatrix& s, const SubsetMask& mask) {
    if (mask.dim != s.m.cols) throw std::invalid_argument("support mask dimension mismatch");
    ReducedDesign rd;
    rd.cols = mask.indices();
    if (rd.cols.empty()) throw std::invalid_argument("support mask must be non-empty");
    rd.a = Matrix(s.m.rows, rd.cols.size());
    rd.row_nonzero.assign(s.m.rows, 0);
    for (std::size_t i = 0; i < s.m.rows; ++i) {
        bool nonzero = false;
        for (std::size_t j = 0; j < rd.cols.size(); ++j) {
            const double v = s.m(i, rd.cols[j]);
            rd.a(i, j) = v;
            nonzero = nonzero || v != 0.0;
        }
        rd.row_nonzero[i] = nonzero;
    }
    return rd;
}

Vector scatter(const std::vector<std::size_t>& cols, const Vector& x, std::size_t n) {
    Vector c(n, 0.0);
    for (std::size_t j = 0; j < cols.size(); ++j) c[cols[j]] = x[j];
    return c;
}

Matrix gram(const Matrix& a) {
    Matrix g(a.cols, a.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j1 = 0; j1 < a.cols; ++j1) {
            const double v = a(i, j1);
            if (v == 0.0) continue;
            for (std::size_t j2 = 0; j2 < a.cols; ++j2) g(j1, j2) += v * a(i, j2);
        }
    return g;
}

Vector at_vec(const Matrix& a, const Vector& r) {  // a^T r
    Vector out(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
        const double ri = r[i];
        if (ri == 0.0) continue;
        for (std::size_t j = 0; j < a.cols; ++j) out[j] += a(i, j) * ri;
    }
    return out;
}

// Positive definiteness with a relative spectral tolerance. An exactly
// singular Gram (count rows that do not span the support) can round to a
// slightly positive Cholesky pivot, so the factorization alone cannot be
// trusted near zero.
bool is_spd(const Matrix& a) {
    const Vector eig = sym_eigenvalues(a);
    return eig.front() > 1e-10 * std::max(std::abs(eig.back()), 1e-300);
}

// Scale-aware gradient tolerance: proportional to the smaller of the total
// count mass and the total row norm, so tiny toy systems and K=1000 runs
// stop at comparable relative accuracy.
double gradient_tolerance(const Matrix& a, const Vector& r) {
    double sum_r = 0.0;
    for (double v : r) sum_r += v;
    double row_norms = 0.0;
    for (std::size_t i = 0; i < a.rows; ++i) {
        double n2 = 0.0;
        for (std::size_t j = 0; j < a.cols; ++j) n2 += a(i, j) * a(i, j);
        row_norms += std::sqrt(n2);
    }
    return 1e-8 * std::min(1.0 + sum_r, std::max(row_norms, 1.0));
}

// Accept the candidate as non-negative (clamping roundoff-level negatives to
// exactly zero), or reject it.
bool clamp_nonnegative(Vector& x) {
    const double tol = 1e-9 * std::max(1.0, inf_norm(x));
    for (double v : x)
        if (v < -tol) return false;
    for (double& v : x)
        if (v <= 0.0) v = 0.0;
    return true;
}

struct NewtonOutcome {
    Vector x;
    int iterations = 0;
    bool converged = false;
    bool value_capped = false;
};

// Damped Newton ascent for concave objectives. value_of returns nullopt
// outside the objective's domain; grad_hess returns the gradient and the
// negated (positive-semidefinite) Hessian. step_limit(x, dir) caps the line
// search start so the first probe lands inside the domain instead of burning
// halvings against a boundary. Objectives whose stationarity system has no
// root can climb without bound (the log terms flatten while a linear term
// keeps paying); value_cap certifies that case: any value beyond it exceeds
// what a usable solution could score, so the ascent is abandoned.
template <class ValueFn, class GradHessFn, class StepLimitFn>
NewtonOutcome damped_newton(Vector x, ValueFn&& value_of, GradHessFn&& grad_hess,
                            StepLimitFn&& step_limit, double tol, double value_cap,
                            int max_iter = 200) {
    std::optional<double> v = value_of(x);
    if (!v) throw NumericError("solver starting point is outside the objective domain");
    NewtonOutcome out;
    int stalled = 0;
    for (int it = 0; it < max_iter; ++it) {
        auto [g, h] = grad_hess(x);
        const double gnorm = inf_norm(g);
        if (gnorm <= tol) {
            out.x = std::move(x);
            out.iterations = it;
            out.converged = true;
            return out;
        }
        Vector dir;
        try {
            dir = solve_spd(h, g);
        } catch (const SingularMatrixError&) {
            out.x = std::move(x);
            out.iterations = it;
            return out;
        }
        double t = std::min(1.0, step_limit(x, dir));
        bool stepped = false;
        const double v_before = *v;
        for (int halve = 0; halve < 60 && t > 0.0; ++halve, t *= 0.5) {
            Vector xn(x.size());
            for (std::size_t j = 0; j < x.size(); ++j) xn[j] = x[j] + t * dir[j];
            const std::optional<double> vn = value_of(xn);
            if (vn && *vn >= *v) {
                x = std::move(xn);
                v = vn;
                stepped = true;
                break;
            }
        }
        // Near the maximum the value gains are quadratic in the gradient and
        // drop below the value's own resolution before the gradient test can
        // fire; an iterate that stops improving by more than a few ulps while
        // the gradient is within a safety factor of tol is converged. The
        // factor keeps a genuine boundary crawl (large gradient, microscopic
        // capped steps) out of this exit.
        const bool at_resolution = !stepped || *v - v_before <= 1e-14 * (1.0 + std::abs(*v));
        stalled = at_resolution ? stalled + 1 : 0;
        if ((stalled >= 2 || !stepped) && gnorm <= 1e3 * tol) {
            out.x = std::move(x);
            out.iterations = it + 1;
            out.converged = true;
            return out;
        }
        if (!stepped) {
            out.x = std::move(x);
            out.iterations = it + 1;
            return out;
        }
        if (*v > value_cap) {
            out.x = std::move(x);
            out.iterations = it + 1;
            out.value_capped = true;
            return out;
        }
    }
    out.x = std::move(x);
    out.iterations = max_iter;
    return out;
}

// Largest step along dir that keeps every count-carrying mean positive,
// pulled slightly off the boundary itself.
auto mean_step_limit(const ReducedDesign& rd, const std::vector<char>& in_w) {
    return [&rd, &in_w](const Vector& x, const Vector& dir) {
        const Vector means = mat_vec(rd.a, x);
        const Vector w = mat_vec(rd.a, dir);
        double t = kInf;
        for (std::size_t i = 0; i < rd.a.rows; ++i)
            if (in_w[i] && w[i] < 0.0) t = std::min(t, means[i] / -w[i]);
        return 0.995 * t;
    };
}

// Any candidate with nonnegative components keeps every mean nonnegative, so
// its log-likelihood is at most sum r*ln(r) - r over the count-carrying rows.
// Values beyond that certify a runaway through negative means.
double likelihood_value_cap(const Vector& r, const std::vector<char>& in_w) {
    double bound = 0.0;
    for (std::size_t i = 0; i < r.size(); ++i)
        if (in_w[i] && r[i] > 0.0) bound += r[i] * std::log(r[i]) - r[i];
    return bound + 1e-6 * (1.0 + std::abs(bound));
}

// Clipped least-squares starting point with zero entries replaced by a
// fraction of the mean count, then shifted until every count-carrying row has
// a positive mean.
Vector newton_start(const ReducedDesign& rd, const Vector& r, const std::vector<char>& in_w,
                    const Vector& fallback) {
    Vector x;
    try {
        x = solve_spd(gram(rd.a), at_vec(rd.a, r));
    } catch (const SingularMatrixError&) {
        x = fallback;
    }
    double mean_r = 0.0;
    for (double v : r) mean_r += v;
    mean_r /= static_cast<double>(r.size());
    const double floor0 = mean_r > 0.0 ? 0.1 * mean_r : 1e-3;
    for (double& v : x) v = v > 0.0 ? v : floor0;

    const Vector means = mat_vec(rd.a, x);
    double min_mean = kInf;
    double min_rowsum = kInf;
    for (std::size_t i = 0; i < rd.a.rows; ++i) {
        if (!in_w[i]) continue;
        double rowsum = 0.0;
        for (std::size_t j = 0; j < rd.a.cols; ++j) rowsum += rd.a(i, j);
        min_mean = std::min(min_mean, means[i]);
        min_rowsum = std::min(min_rowsum, rowsum);
    }
    if (min_mean < floor0 && min_rowsum > 0.0 && min_rowsum < kInf) {
        const double shift = (floor0 - min_mean) / min_rowsum;
        for (double& v : x) v += shift;
    }
    return x;
}

// Reduced log-likelihood restricted to rows the support can see; rows whose
// reduced window is all-zero are constants and excluded.
std::optional<double> reduced_ll(const ReducedDesign& rd, const Vector& r,
                                 const std::vector<char>& in_w, const Vector& x) {
    const Vector means = mat_vec(rd.a, x);
    double acc = 0.0;
    for (std::size_t i = 0; i < rd.a.rows; ++i) {
        if (!rd.row_nonzero[i]) continue;
        const double m = means[i];
        if (in_w[i]) {
            if (!(m > 0.0)) return std::nullopt;
            acc += -m + r[i] * std::log(m);
        } else {
            acc += -m;
        }
    }
    return acc;
}

std::pair<Vector, Matrix> reduced_ll_grad_hess(const ReducedDesign& rd, const Vector& r,
                                               const std::vector<char>& in_w, const Vector& x) {
    const std::size_t d = rd.a.cols;
    const Vector means = mat_vec(rd.a, x);
    Vector g(d, 0.0);
    Matrix h(d, d);
    for (std::size_t i = 0; i < rd.a.rows; ++i) {
        if (!rd.row_nonzero[i]) continue;
        const double w = in_w[i] ? r[i] / means[i] - 1.0 : -1.0;
        for (std::size_t j = 0; j < d; ++j) g[j] += w * rd.a(i, j);
        if (in_w[i]) {
            const double hw = r[i] / (means[i] * means[i]);
            for (std::size_t j1 = 0; j1 < d; ++j1) {
                const double v = rd.a(i, j1);
                if (v == 0.0) continue;
                for (std::size_t j2 = 0; j2 < d; ++j2) h(j1, j2) += hw * v * rd.a(i, j2);
            }
        }
    }
    return {std::move(g), std::move(h)};
}

std::vector<char> count_rows(const ReducedDesign& rd, const Vector& r) {
    std::vector<char> in_w(rd.a.rows, 0);
    for (std::size_t i = 0; i < rd.a.rows; ++i)
        in_w[i] = rd.row_nonzero[i] && r[i] > 0.0;
    return in_w;
}

Matrix weighted_gram(const ReducedDesign& rd, const std::vector<char>& take) {
    Matrix g(rd.a.cols, rd.a.cols);
    for (std::size_t i = 0; i < rd.a.rows; ++i) {
        if (!take[i]) continue;
        for (std::size_t j1 = 0; j1 < rd.a.cols; ++j1) {
            const double v = rd.a(i, j1);
            if (v == 0.0) continue;
            for (std::size_t j2 = 0; j2 < rd.a.cols; ++j2) g(j1, j2) += v * rd.a(i, j2);
        }
    }
    return g;
}

// Stationary point of the reduced log-likelihood, or nullopt when the system
// cannot have one (no count-carrying rows, or those rows do not span the
// support, or the reduced design itself is rank-deficient).
std::optional<NewtonOutcome> solve_reduced_ml(const ReducedDesign& rd, const Vector& r) {
    const std::vector<char> in_w = count_rows(rd, r);
    if (std::none_of(in_w.begin(), in_w.end(), [](char c) { return c != 0; }))
        return std::nullopt;
    if (!is_spd(weighted_gram(rd, in_w))) return std::nullopt;
    if (!is_spd(gram(rd.a))) return std::nullopt;

    const Vector x0 = newton_start(rd, r, in_w, Vector(rd.a.cols, 1.0));
    const double tol = gradient_tolerance(rd.a, r);
    NewtonOutcome res = damped_newton(
        x0, [&](const Vector& x) { return reduced_ll(rd, r, in_w, x); },
        [&](const Vector& x) { return reduced_ll_grad_hess(rd, r, in_w, x); },
        mean_step_limit(rd, in_w), tol, likelihood_value_cap(r, in_w));
    if (res.value_capped) return std::nullopt;  // unbounded ascent, no usable root
    if (!res.converged)
        throw NumericError("likelihood stationary-point solve did not converge in 200 iterations");
    return res;
}

// Supports smaller than the full set, largest first; within one cardinality
// the numerically smallest mask comes first so ties resolve deterministically.
std::vector<SubsetMask> subset_enumeration(std::size_t n) {
    std::vector<std::uint32_t> masks;
    const std::uint32_t full = (1u << n) - 1u;
    for (std::uint32_t m = 1; m < full; ++m) masks.push_back(m);
    std::stable_sort(masks.begin(), masks.end(), [](std::uint32_t a, std::uint32_t b) {
        const int pa = std::popcount(a), pb = std::popcount(b);
        if (pa != pb) return pa > pb;
        return a < b;
    });
    std::vector<SubsetMask> out;
    out.reserve(masks.size());
    for (std::uint32_t m : masks) out.push_back(SubsetMask{m, n});
    return out;
}

double quad_form(const Matrix& p, const Vector& d) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.rows; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < p.cols; ++j) row += p(i, j) * d[j];
        acc += d[i] * row;
    }
    return acc;
}

}  // namespace

SubsetMask SubsetMask::full(std::size_t dim) {
    if (dim == 0 || dim > 31) throw std::invalid_argument("support dimension out of range");
    return SubsetMask{(1u << dim) - 1u, dim};
}

std::size_t SubsetMask::count() const { return static_cast<std::size_t>(std::popcount(bits)); }

std::vector<std::size_t> SubsetMask::indices() const {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < dim; ++i)
        if (contains(i)) out.push_back(i);
    return out;
}

double log_likelihood(const Vector& c, const Observation& r, const DesignMatrix& s_mat) {
    check_dims(r, s_mat);
    if (c.size() != s_mat.m.cols)
        throw std::invalid_argument("CIR length does not match the design matrix");
    double acc = 0.0;
    for (std::size_t i = 0; i < s_mat.m.rows; ++i) {
        double m = 0.0;
        for (std::size_t j = 0; j < s_mat.m.cols; ++j) m += s_mat.m(i, j) * c[j];
        const auto cnt = r.counts[i];
        if (cnt > 0) {
            if (!(m > 0.0)) return -kInf;
            acc += -m + static_cast<double>(cnt) * std::log(m);
        } else {
            acc += -m;
        }
    }
    return acc;
}

double log_likelihood(const CirVector& cir, const Observation& r, const DesignMatrix& s_mat) {
    return log_likelihood(cir.to_vector(), r, s_mat);
}

std::optional<Vector> solve_subset_ml(const Observation& r, const DesignMatrix& s_mat,
                                      const SubsetMask& subset, int* iterations) {
    check_dims(r, s_mat);
    const Vector rv = counts_to_doubles(r);
    const ReducedDesign rd = reduce(s_mat, subset);
    const auto res = solve_reduced_ml(rd, rv);
    if (!res) return std::nullopt;
    if (iterations) *iterations = res->iterations;
    return res->x;
}

EstimateResult ml_estimate(const Observation& r, const DesignMatrix& s_mat) {
    check_dims(r, s_mat);
    const Vector rv = counts_to_doubles(r);
    const std::size_t n = s_mat.m.cols;
    if (n > 16) throw std::invalid_argument("memory too large for exhaustive support enumeration");

    double sum_r = 0.0;
    for (double v : rv) sum_r += v;
    if (sum_r == 0.0) {
        // Every likelihood term is -mean, so the all-zero CIR is the maximum;
        // no support has an interior stationary point in this case.
        EstimateResult res;
        res.cir = CirVector::from_vector(Vector(n, 0.0));
        res.active_subset = SubsetMask{1u << (n - 1), n};
        res.objective = 0.0;
        return res;
    }

    int total_iters = 0;
    const auto try_mask =
        [&](const SubsetMask& mask) -> std::optional<std::pair<Vector, double>> {
        const ReducedDesign rd = reduce(s_mat, mask);
        const auto sol = solve_reduced_ml(rd, rv);
        if (!sol) return std::nullopt;
        total_iters += sol->iterations;
        Vector x = sol->x;
        if (!clamp_nonnegative(x)) return std::nullopt;
        Vector c = scatter(rd.cols, x, n);
        const double g = log_likelihood(c, r, s_mat);
        return std::make_pair(std::move(c), g);
    };

    const SubsetMask full = SubsetMask::full(n);
    if (auto cand = try_mask(full)) {
        return {CirVector::from_vector(cand->first), full, cand->second, total_iters};
    }

    std::optional<EstimateResult> best;
    for (const SubsetMask& mask : subset_enumeration(n)) {
        const auto cand = try_mask(mask);
        if (!cand) continue;
        if (!best || cand->second > best->objective)
            best = EstimateResult{CirVector::from_vector(cand->first), mask, cand->second, 0};
    }
    if (!best) throw NumericError("no feasible candidate in the support enumeration");
    best->solver_iterations = total_iters;
    return *best;
}

CirVector ml_suboptimal(const Observation& r, const DesignMatrix& s_mat) {
    check_dims(r, s_mat);
    const Vector rv = counts_to_doubles(r);
    const std::size_t n = s_mat.m.cols;

    ReducedDesign rd;  // full design in reduced form: every column kept
    rd.cols.resize(n);
    for (std::size_t j = 0; j < n; ++j) rd.cols[j] = j;
    rd.a = s_mat.m;
    rd.row_nonzero.assign(s_mat.m.rows, 1);  // the ones column is always there

    const std::vector<char> in_w = count_rows(rd, rv);
    Vector ls = solve_spd(gram(rd.a), at_vec(rd.a, rv));
    if (std::none_of(in_w.begin(), in_w.end(), [](char c) { return c != 0; })) {
        // all counts zero: the clipped least-squares point (the zero vector)
        // already maximizes the likelihood
        for (double& v : ls) v = v > 0.0 ? v : 0.0;
        return CirVector::from_vector(ls);
    }
    const Vector x0 = newton_start(rd, rv, in_w, Vector(n, 1.0));
    const double tol = gradient_tolerance(rd.a, rv);

    NewtonOutcome res;
    if (is_spd(weighted_gram(rd, in_w))) {
        res = damped_newton(
            x0, [&](const Vector& x) { return reduced_ll(rd, rv, in_w, x); },
            [&](const Vector& x) { return reduced_ll_grad_hess(rd, rv, in_w, x); },
            mean_step_limit(rd, in_w), tol, likelihood_value_cap(rv, in_w));
    } else {
        // The count-carrying rows do not pin every direction, so the full
        // stationarity system has no root. Optimize over the affine slice
        // clip(least squares) + span{count-carrying rows}, where the
        // objective is strictly concave.
        std::vector<Vector> basis;
        Vector s_bar(n, 0.0);
        std::size_t n_w = 0;
        for (std::size_t i = 0; i < rd.a.rows; ++i) {
            if (!in_w[i]) continue;
            ++n_w;
            Vector v(n);
            double norm0 = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                v[j] = rd.a(i, j);
                s_bar[j] += v[j];
                norm0 += v[j] * v[j];
            }
            for (const Vector& b : basis) {
                double proj = 0.0;
                for (std::size_t j = 0; j < n; ++j) proj += v[j] * b[j];
                for (std::size_t j = 0; j < n; ++j) v[j] -= proj * b[j];
            }
            double rem = 0.0;
            for (double vj : v) rem += vj * vj;
            if (rem > 1e-20 * std::max(norm0, 1.0)) {
                const double inv = 1.0 / std::sqrt(rem);
                for (double& vj : v) vj *= inv;
                basis.push_back(std::move(v));
            }
        }
        for (double& v : s_bar) v /= static_cast<double>(n_w);

        Vector base = ls;
        for (double& v : base) v = v > 0.0 ? v : 0.0;
        // If clipping drove a count-carrying mean to zero, shift along the
        // average count row; it lies inside the span, so the slice (and the
        // optimum) is unchanged.
        double shift = 0.0;
        double mean_r = 0.0;
        for (double v : rv) mean_r += v;
        mean_r /= static_cast<double>(rv.size());
        const double floor0 = 0.1 * mean_r;
        for (std::size_t i = 0; i < rd.a.rows; ++i) {
            if (!in_w[i]) continue;
            double m = 0.0, q = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                m += rd.a(i, j) * base[j];
                q += rd.a(i, j) * s_bar[j];
            }
            if (m <= 0.0 && (floor0 - m) / q > shift) shift = (floor0 - m) / q;
        }
        if (shift > 0.0)
            for (std::size_t j = 0; j < n; ++j) base[j] += shift * s_bar[j];

        const std::size_t d = basis.size();
        const auto lift = [&](const Vector& y) {
            Vector c = base;
            for (std::size_t b = 0; b < d; ++b)
                for (std::size_t j = 0; j < n; ++j) c[j] += y[b] * basis[b][j];
            return c;
        };
        const auto slice_step_limit = [&](const Vector& y, const Vector& dy) {
            Vector dc(n, 0.0);
            for (std::size_t b = 0; b < d; ++b)
                for (std::size_t j = 0; j < n; ++j) dc[j] += dy[b] * basis[b][j];
            const Vector means = mat_vec(rd.a, lift(y));
            const Vector w = mat_vec(rd.a, dc);
            double tmax = kInf;
            for (std::size_t i = 0; i < rd.a.rows; ++i)
                if (in_w[i] && w[i] < 0.0) tmax = std::min(tmax, means[i] / -w[i]);
            return 0.995 * tmax;
        };
        res = damped_newton(
            Vector(d, 0.0),
            [&](const Vector& y) { return reduced_ll(rd, rv, in_w, lift(y)); },
            [&](const Vector& y) {
                const auto [g, h] = reduced_ll_grad_hess(rd, rv, in_w, lift(y));
                Vector gy(d, 0.0);
                Matrix hy(d, d);
                for (std::size_t b1 = 0; b1 < d; ++b1) {
                    for (std::size_t j = 0; j < n; ++j) gy[b1] += basis[b1][j] * g[j];
                    for (std::size_t b2 = 0; b2 < d; ++b2) {
                        double acc = 0.0;
                        for (std::size_t j1 = 0; j1 < n; ++j1) {
                            double hrow = 0.0;
                            for (std::size_t j2 = 0; j2 < n; ++j2)
                                hrow += h(j1, j2) * basis[b2][j2];
                            acc += basis[b1][j1] * hrow;
                        }
                        hy(b1, b2) = acc;
                    }
                }
                return std::make_pair(std::move(gy), std::move(hy));
            },
            slice_step_limit, tol, likelihood_value_cap(rv, in_w));
        if (res.converged) res.x = lift(res.x);
    }
    if (!res.converged) {
        // The one-shot system has no root worth clipping (runaway ascent or a
        // boundary-pinned iterate); defer to the exhaustive estimator instead
        // of returning a diverged point.
        return ml_estimate(r, s_mat).cir;
    }
    for (double& v : res.x) v = v > 0.0 ? v : 0.0;
    return CirVector::from_vector(res.x);
}

EstimateResult lsse_estimate(const Observation& r, const DesignMatrix& s_mat) {
    check_dims(r, s_mat);
    const Vector rv = counts_to_doubles(r);
    const std::size_t n = s_mat.m.cols;
    if (n > 16) throw std::invalid_argument("memory too large for exhaustive support enumeration");

    const auto sse_of = [&](const Vector& c) {
        double acc = 0.0;
        for (std::size_t i = 0; i < s_mat.m.rows; ++i) {
            double m = 0.0;
            for (std::size_t j = 0; j < n; ++j) m += s_mat.m(i, j) * c[j];
            const double e = rv[i] - m;
            acc += e * e;
        }
        return acc;
    };

    const auto try_mask =
        [&](const SubsetMask& mask) -> std::optional<std::pair<Vector, double>> {
        const ReducedDesign rd = reduce(s_mat, mask);
        if (!is_spd(gram(rd.a))) return std::nullopt;
        Vector x;
        try {
            x = solve_spd(gram(rd.a), at_vec(rd.a, rv));
        } catch (const SingularMatrixError&) {
            return std::nullopt;
        }
        if (!clamp_nonnegative(x)) return std::nullopt;
        Vector c = scatter(rd.cols, x, n);
        const double sse = sse_of(c);
        return std::make_pair(std::move(c), sse);
    };

    const SubsetMask full = SubsetMask::full(n);
    if (auto cand = try_mask(full))
        return {CirVector::from_vector(cand->first), full, cand->second, 0};

    std::optional<EstimateResult> best;
    for (const SubsetMask& mask : subset_enumeration(n)) {
        const auto cand = try_mask(mask);
        if (!cand) continue;
        if (!best || cand->second < best->objective)
            best = EstimateResult{CirVector::from_vector(cand->first), mask, cand->second, 0};
    }
    if (!best) throw SingularMatrixError("every support subsystem is rank-deficient");
    return *best;
}

CirVector lsse_suboptimal(const Observation& r, const DesignMatrix& s_mat) {
    check_dims(r, s_mat);
    const Vector rv = counts_to_doubles(r);
    Vector x = solve_spd(gram(s_mat.m), at_vec(s_mat.m, rv));
    for (double& v : x) v = v > 0.0 ? v : 0.0;
    return CirVector::from_vector(x);
}

EstimateResult map_estimate(const Observation& r, const DesignMatrix& s_mat,
                            const PriorMoments& moments) {
    check_dims(r, s_mat);
    const Vector rv = counts_to_doubles(r);
    const std::size_t n = s_mat.m.cols;
    if (n > 16) throw std::invalid_argument("memory too large for exhaustive support enumeration");
    if (moments.mean.size() != n || moments.central_covariance.rows != n ||
        moments.central_covariance.cols != n)
        throw std::invalid_argument("prior moments do not match the design matrix");

    Matrix prec;
    try {
        prec = invert_sym(moments.central_covariance);
    } catch (const SingularMatrixError&) {
        throw SingularMatrixError("prior covariance is singular; use a spread sigma > 0");
    }
    const Vector& mu = moments.mean;

    const auto penalty = [&](const Vector& c) {
        Vector d(n);
        for (std::size_t j = 0; j < n; ++j) d[j] = c[j] - mu[j];
        return 0.5 * quad_form(prec, d);
    };
    const auto penalized = [&](const Vector& c) { return log_likelihood(c, r, s_mat) - penalty(c); };

    int total_iters = 0;
    const auto solve_mask = [&](const SubsetMask& mask) -> std::pair<Vector, int> {
        const ReducedDesign rd = reduce(s_mat, mask);
        const std::vector<char> in_w = count_rows(rd, rv);
        Vector fallback(rd.cols.size());
        for (std::size_t j = 0; j < rd.cols.size(); ++j) fallback[j] = mu[rd.cols[j]];
        const Vector x0 = newton_start(rd, rv, in_w, fallback);
        const double tol = gradient_tolerance(rd.a, rv);

        const auto value_of = [&](const Vector& x) -> std::optional<double> {
            const auto base = reduced_ll(rd, rv, in_w, x);
            if (!base) return std::nullopt;
            return *base - penalty(scatter(rd.cols, x, n));
        };
        const auto grad_hess = [&](const Vector& x) {
            auto [g, h] = reduced_ll_grad_hess(rd, rv, in_w, x);
            const Vector c = scatter(rd.cols, x, n);
            Vector d(n);
            for (std::size_t j = 0; j < n; ++j) d[j] = c[j] - mu[j];
            const Vector pg = mat_vec(prec, d);
            for (std::size_t j = 0; j < rd.cols.size(); ++j) {
                g[j] -= pg[rd.cols[j]];
                for (std::size_t j2 = 0; j2 < rd.cols.size(); ++j2)
                    h(j, j2) += prec(rd.cols[j], rd.cols[j2]);
            }
            return std::make_pair(std::move(g), std::move(h));
        };
        // The quadratic penalty makes the objective strictly concave and
        // coercive, so a root always exists and no value cap is needed.
        NewtonOutcome res = damped_newton(x0, value_of, grad_hess, mean_step_limit(rd, in_w),
                                          tol, kInf);
        if (!res.converged)
            throw NumericError("penalized solve did not converge in 200 iterations");
        return {std::move(res.x), res.iterations};
    };

    const auto try_mask =
        [&](const SubsetMask& mask) -> std::optional<std::pair<Vector, double>> {
        auto [x, iters] = solve_mask(mask);
        total_iters += iters;
        if (!clamp_nonnegative(x)) return std::nullopt;
        Vector c = scatter(mask.indices(), x, n);
        const double h = penalized(c);
        return std::make_pair(std::move(c), h);
    };

    const SubsetMask full = SubsetMask::full(n);
    if (auto cand = try_mask(full))
        return {CirVector::from_vector(cand->first), full, cand->second, total_iters};

    std::optional<EstimateResult> best;
    for (const SubsetMask& mask : subset_enumeration(n)) {
        const auto cand = try_mask(mask);
        if (!cand) continue;
        if (!best || cand->second > best->objective)
            best = EstimateResult{CirVector::from_vector(cand->first), mask, cand->second, 0};
    }
    if (!best) throw NumericError("no feasible candidate in the support enumeration");
    best->solver_iterations = total_iters;
    return *best;
}

Matrix lmmse_matrix(const DesignMatrix& s_mat, const PriorMoments& moments) {
    const std::size_t n = s_mat.m.cols;
    if (moments.mean.size() != n || moments.second_moment.rows != n ||
        moments.second_moment.cols != n)
        throw std::invalid_argument("prior moments do not match the design matrix");
    const Matrix sphi = mat_mul(s_mat.m, moments.second_moment);  // rows x n
    Matrix inner = mat_mul(sphi, transpose(s_mat.m));             // rows x rows
    const Vector smu = mat_vec(s_mat.m, moments.mean);
    for (std::size_t i = 0; i < inner.rows; ++i) inner(i, i) += smu[i];
    const Matrix ft = solve_spd(inner, sphi);  // rows x n
    return transpose(ft);
}

CirVector lmmse_estimate(const Observation& r, const Matrix& f) {
    const Vector rv = counts_to_doubles(r);
    if (f.cols != rv.size())
        throw std::invalid_argument("filter width does not match the observation");
    Vector c = mat_vec(f, rv);
    for (double& v : c) v = v > 0.0 ? v : 0.0;
    return CirVector::from_vector(c);
}

CirVector isi_free_estimate(const Observation& r, const TrainingSequence& seq,
                            std::size_t memory, std::size_t k0) {
    const std::size_t k_total = seq.symbols.size();
    const std::size_t period = memory + 1;
    if (memory < 1) throw std::invalid_argument("memory must be at least 1");
    if (k0 < 1 || k0 > period) throw std::invalid_argument("offset k0 must lie in [1, L+1]");
    if (k_total < memory || r.counts.size() != k_total - memory + 1)
        throw std::invalid_argument("observation length does not match the sequence");
    for (std::size_t k = 1; k <= k_total; ++k) {
        const bool pulse = k >= k0 && (k - k0) % period == 0;
        if (seq.symbols[k - 1] != (pulse ? 1.0 : 0.0))
            throw std::invalid_argument(
                "sequence is not the single-release-per-window pattern for this (L, k0)");
    }
    const Vector rv = counts_to_doubles(r);

    // Each observed interval k = L..K falls in exactly one residue class mod
    // L+1: class l-1 holds tap l alone (k = k0+l-1 mod L+1) and class L is
    // noise-only.
    std::vector<double> tap_sum(memory, 0.0);
    std::vector<std::size_t> tap_cnt(memory, 0);
    double noise_sum = 0.0;
    std::size_t noise_cnt = 0;
    for (std::size_t k = memory; k <= k_total; ++k) {
        const double value = rv[k - memory];
        const std::size_t cls = (k + 2 * period - (k0 % period)) % period;
        if (cls == memory) {
            noise_sum += value;
            ++noise_cnt;
        } else {
            tap_sum[cls] += value;
            ++tap_cnt[cls];
        }
    }
    if (noise_cnt == 0) throw std::invalid_argument("no noise-only interval in range");
    for (std::size_t l = 0; l < memory; ++l)
        if (tap_cnt[l] == 0) throw std::invalid_argument("a tap has no interval in range");

    CirVector out;
    out.noise_mean = noise_sum / static_cast<double>(noise_cnt);
    out.taps.resize(memory);
    for (std::size_t l = 0; l < memory; ++l) {
        const double avg = tap_sum[l] / static_cast<double>(tap_cnt[l]) - out.noise_mean;
        out.taps[l] = avg > 0.0 ? avg : 0.0;
    }
    return out;
}

}  // namespace mccir
