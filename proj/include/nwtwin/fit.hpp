#pragma once

// Damped (Levenberg-Marquardt style) least squares with analytic
// Jacobians, simple box bounds and restart support. Shared by the
// cavity linewidth extraction and the estimation fits.

#include <Eigen/Dense>
#include <functional>
#include <limits>
#include <stdexcept>

namespace nwtwin::fit {

// Fills r (residuals); when jac != nullptr also fills the Jacobian
// dr/dp (rows = residuals, cols = params).
using ResidualFn =
    std::function<void(const Eigen::VectorXd& p, Eigen::VectorXd& r, Eigen::MatrixXd* jac)>;

struct Options {
    int max_iterations = 200;
    double tol_step = 1e-12;     // relative step size
    double tol_gradient = 1e-14;
    double lambda0 = 1e-3;
};

struct Result {
    Eigen::VectorXd params;
    double chi2 = std::numeric_limits<double>::infinity();
    int iterations = 0;
    bool converged = false;
    Eigen::MatrixXd covariance; // (J^T J)^-1 * chi2 / dof
};

inline Result levenberg_marquardt(const ResidualFn& fn, Eigen::VectorXd p,
                                  const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                  const Options& opt = {}) {
    const auto n = p.size();
    if (lower.size() != n || upper.size() != n)
        throw std::invalid_argument("levenberg_marquardt: bound size mismatch");

    auto clamp = [&](Eigen::VectorXd& x) {
        for (Eigen::Index i = 0; i < n; ++i)
            x[i] = std::min(upper[i], std::max(lower[i], x[i]));
    };
    clamp(p);

    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    fn(p, r, &J);
    double chi2 = r.squaredNorm();
    double lambda = opt.lambda0;

    Result res;
    res.params = p;
    res.chi2 = chi2;

    for (int it = 0; it < opt.max_iterations; ++it) {
        res.iterations = it + 1;
        Eigen::MatrixXd jtj = J.transpose() * J;
        Eigen::VectorXd g = J.transpose() * r;
        if (g.lpNorm<Eigen::Infinity>() < opt.tol_gradient) {
            res.converged = true;
            break;
        }
        Eigen::MatrixXd a = jtj;
        a.diagonal() += lambda * jtj.diagonal().cwiseMax(1e-30);
        Eigen::VectorXd step = a.ldlt().solve(-g);
        Eigen::VectorXd p_try = p + step;
        clamp(p_try);

        Eigen::VectorXd r_try;
        fn(p_try, r_try, nullptr);
        double chi2_try = r_try.squaredNorm();
        if (chi2_try < chi2) {
            double rel = (p_try - p).norm() / (p.norm() + 1e-300);
            p = p_try;
            fn(p, r, &J);
            chi2 = r.squaredNorm();
            lambda = std::max(lambda * 0.3, 1e-12);
            if (rel < opt.tol_step) {
                res.converged = true;
                break;
            }
        } else {
            lambda *= 10.0;
            if (lambda > 1e12) break;
        }
    }

    res.params = p;
    res.chi2 = chi2;
    const auto m = r.size();
    if (m > n) {
        Eigen::MatrixXd jtj = J.transpose() * J;
        Eigen::MatrixXd inv = jtj.completeOrthogonalDecomposition().pseudoInverse();
        res.covariance = inv * (chi2 / double(m - n));
    }
    return res;
}

// Largest relative deviation between the model's analytic Jacobian and
// a central finite difference at p; each column is normalized by its
// own largest magnitude so flat directions do not blow up the ratio.
inline double max_jacobian_error(const ResidualFn& fn, const Eigen::VectorXd& p,
                                 double rel_step = 1e-6) {
    Eigen::VectorXd r;
    Eigen::MatrixXd J;
    fn(p, r, &J);
    double worst = 0.0;
    for (Eigen::Index j = 0; j < p.size(); ++j) {
        const double h = rel_step * std::max(std::abs(p[j]), 1e-30);
        Eigen::VectorXd pp = p, pm = p;
        pp[j] += h;
        pm[j] -= h;
        Eigen::VectorXd rp, rm;
        fn(pp, rp, nullptr);
        fn(pm, rm, nullptr);
        const Eigen::VectorXd fd = (rp - rm) / (2.0 * h);
        const double scale = std::max(J.col(j).cwiseAbs().maxCoeff(), fd.cwiseAbs().maxCoeff());
        if (scale <= 0.0) continue;
        worst = std::max(worst, (J.col(j) - fd).cwiseAbs().maxCoeff() / scale);
    }
    return worst;
}

inline Result levenberg_marquardt(const ResidualFn& fn, const Eigen::VectorXd& p0,
                                  const Options& opt = {}) {
    Eigen::VectorXd lo = Eigen::VectorXd::Constant(p0.size(), -std::numeric_limits<double>::infinity());
    Eigen::VectorXd hi = Eigen::VectorXd::Constant(p0.size(), std::numeric_limits<double>::infinity());
    return levenberg_marquardt(fn, p0, lo, hi, opt);
}

} // namespace nwtwin::fit
