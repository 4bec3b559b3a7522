#include "qdcav/lm.hpp"

#include <algorithm>
#include <cmath>

#include "qdcav/error.hpp"

namespace qdcav::lm {

namespace {

Vector project(Vector x, const Vector& lo, const Vector& hi) {
    for (Eigen::Index k = 0; k < x.size(); ++k) x[k] = std::clamp(x[k], lo[k], hi[k]);
    return x;
}

}  // namespace

Matrix numeric_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x) {
    const Vector r0 = f(x);
    Matrix J(r0.size(), x.size());
    for (Eigen::Index k = 0; k < x.size(); ++k) {
        Vector xp = x;
        const double h = 1e-7 * std::max(std::abs(x[k]), 1e-6);
        xp[k] += h;
        J.col(k) = (f(xp) - r0) / (xp[k] - x[k]);
    }
    return J;
}

Result minimize(const Problem& p, Vector x0, const Options& opts) {
    const auto n = x0.size();
    if (p.lower.size() != n || p.upper.size() != n) throw ParameterError("lm: bound sizes differ from x0");
    auto jac = [&](const Vector& x) { return p.jacobian ? p.jacobian(x) : numeric_jacobian(p.residuals, x); };

    Result res;
    res.x = project(std::move(x0), p.lower, p.upper);
    Vector r = p.residuals(res.x);
    res.cost = 0.5 * r.squaredNorm();
    if (!std::isfinite(res.cost)) throw NumericError("lm: non-finite cost at the initial point");
    res.accepted_costs.push_back(res.cost);

    Matrix J = jac(res.x);
    double lambda = opts.lambda0;
    for (res.iterations = 0; res.iterations < opts.max_iterations; ++res.iterations) {
        if (res.cost == 0.0) {
            res.converged = true;
            break;
        }
        const Matrix jtj = J.transpose() * J;
        const Vector g = J.transpose() * r;
        bool accepted = false;
        while (lambda <= opts.lambda_max) {
            Matrix a = jtj;
            for (Eigen::Index k = 0; k < n; ++k) a(k, k) += lambda * std::max(jtj(k, k), 1e-30);
            const Vector step = a.ldlt().solve(-g);
            const Vector trial = project(res.x + step, p.lower, p.upper);
            const Vector r_trial = p.residuals(trial);
            const double c_trial = 0.5 * r_trial.squaredNorm();
            if (std::isfinite(c_trial) && c_trial < res.cost) {
                const double rel = (res.cost - c_trial) / res.cost;
                res.x = trial;
                r = r_trial;
                res.cost = c_trial;
                res.accepted_costs.push_back(c_trial);
                lambda = std::max(lambda / 10.0, 1e-12);
                accepted = true;
                if (rel < opts.rel_cost_tol) res.converged = true;
                break;
            }
            lambda *= 10.0;
        }
        if (!accepted) {
            // No descent direction left at any damping: stationary to rounding.
            res.converged = true;
            break;
        }
        if (res.converged) break;
        J = jac(res.x);
    }
    const Matrix jf = jac(res.x);
    res.jtj = jf.transpose() * jf;
    return res;
}

Matrix covariance(const Result& r, int n_residuals) {
    const auto p = r.x.size();
    const double dof = std::max<double>(1.0, static_cast<double>(n_residuals - p));
    const double sigma2 = 2.0 * r.cost / dof;
    Eigen::SelfAdjointEigenSolver<Matrix> es(r.jtj);
    Vector inv = es.eigenvalues();
    const double cutoff = 1e-14 * std::max(1e-300, inv.maxCoeff());
    for (Eigen::Index k = 0; k < inv.size(); ++k) inv[k] = inv[k] > cutoff ? 1.0 / inv[k] : 0.0;
    Matrix cov = es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
    cov = 0.5 * (cov + cov.transpose());
    return sigma2 * cov;
}

}  // namespace qdcav::lm
