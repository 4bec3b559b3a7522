#pragma once

// Bounded Levenberg-Marquardt for small dense problems.
//
// Damping follows Marquardt's diagonal scaling: (J'J + lambda diag(J'J)) dx = -J'r.
// lambda grows x10 on a rejected step and shrinks /10 on an accepted one.
// Trial points are projected onto the box bounds, so every accepted iterate
// is feasible and the cost never increases between accepted iterates.

#include <functional>
#include <vector>

#include <Eigen/Dense>

namespace qdcav::lm {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct Problem {
    /// Residuals r(x) (model - data, already weighted).
    std::function<Vector(const Vector&)> residuals;
    /// Optional analytic Jacobian dr/dx; forward differences otherwise.
    std::function<Matrix(const Vector&)> jacobian;
    Vector lower;
    Vector upper;
};

struct Options {
    int max_iterations = 200;
    double rel_cost_tol = 1e-10;
    double lambda0 = 1e-3;
    double lambda_max = 1e20;
};

struct Result {
    Vector x;
    double cost = 0.0;  // 0.5 * |r|^2
    int iterations = 0;
    bool converged = false;
    std::vector<double> accepted_costs;  // cost after each accepted step, starting with the initial cost
    Matrix jtj;                          // J'J at the solution
};

Result minimize(const Problem& problem, Vector x0, const Options& opts = {});

/// Forward-difference Jacobian with per-parameter steps scaled to |x|.
Matrix numeric_jacobian(const std::function<Vector(const Vector&)>& f, const Vector& x);

/// sigma^2 (J'J)^+ with sigma^2 = |r|^2 / (n - p); symmetric PSD by construction.
Matrix covariance(const Result& r, int n_residuals);

}  // namespace qdcav::lm
