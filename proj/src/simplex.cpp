#include "flexgrid/lp.hpp"

#include <cmath>
#include <vector>

namespace flexgrid {

using Eigen::Index;

namespace {

class Tableau {
  public:
    Tableau(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, double tol)
        : m_(a.rows()), n_(a.cols()), tol_(tol), t_(a.rows(), a.cols() + a.rows() + 1),
          basis_(static_cast<std::size_t>(a.rows())) {
        t_.setZero();
        t_.leftCols(n_) = a;
        t_.block(0, n_, m_, m_).setIdentity();
        t_.col(n_ + m_) = b;
        for (Index r = 0; r < m_; ++r) basis_[static_cast<std::size_t>(r)] = n_ + r;
    }

    // Reduced costs c_j - c_B' B^-1 a_j over all structural and slack columns.
    Eigen::RowVectorXd reduced(const Eigen::VectorXd& c) const {
        Eigen::RowVectorXd cfull = Eigen::RowVectorXd::Zero(n_ + m_);
        cfull.head(n_) = c.transpose();
        Eigen::RowVectorXd cb(m_);
        for (Index r = 0; r < m_; ++r) cb(r) = cfull(basis_[static_cast<std::size_t>(r)]);
        return cfull - cb * t_.leftCols(n_ + m_);
    }

    // Runs Bland's rule on objective c; columns with `barred` set never enter.
    LpStatus optimize(const Eigen::VectorXd& c, const std::vector<bool>& barred, int& pivots) {
        const int cap = 50 * static_cast<int>(n_ + m_ + 10);
        for (int it = 0; it < cap; ++it) {
            const Eigen::RowVectorXd d = reduced(c);
            Index enter = -1;
            for (Index j = 0; j < n_ + m_; ++j) {
                if (!barred[static_cast<std::size_t>(j)] && d(j) > tol_) {
                    enter = j;
                    break;
                }
            }
            if (enter < 0) return LpStatus::Optimal;
            Index leave = -1;
            double best = 0.0;
            for (Index r = 0; r < m_; ++r) {
                const double coef = t_(r, enter);
                if (coef <= tol_) continue;
                const double ratio = t_(r, n_ + m_) / coef;
                if (leave < 0 || ratio < best - 1e-12 ||
                    (ratio <= best + 1e-12 &&
                     basis_[static_cast<std::size_t>(r)] < basis_[static_cast<std::size_t>(leave)])) {
                    leave = r;
                    best = ratio;
                }
            }
            if (leave < 0) return LpStatus::Unbounded;
            pivot(leave, enter);
            ++pivots;
        }
        return LpStatus::IterationLimit;
    }

    Eigen::VectorXd solution() const {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(n_);
        for (Index r = 0; r < m_; ++r) {
            const Index j = basis_[static_cast<std::size_t>(r)];
            if (j < n_) x(j) = std::max(0.0, t_(r, n_ + m_));
        }
        return x;
    }

    Index width() const { return n_ + m_; }

  private:
    void pivot(Index row, Index col) {
        t_.row(row) /= t_(row, col);
        for (Index r = 0; r < m_; ++r) {
            if (r == row) continue;
            const double f = t_(r, col);
            if (f != 0.0) t_.row(r) -= f * t_.row(row);
        }
        basis_[static_cast<std::size_t>(row)] = col;
    }

    Index m_, n_;
    double tol_;
    Eigen::MatrixXd t_;
    std::vector<Index> basis_;
};

}  // namespace

LpResult maximize_lp(const Eigen::MatrixXd& a, const Eigen::VectorXd& b, const Eigen::VectorXd& c,
                     const std::optional<Eigen::VectorXd>& secondary, double tolerance) {
    LpResult res;
    if (a.rows() != b.size() || a.cols() != c.size() ||
        (secondary && secondary->size() != c.size())) {
        res.status = LpStatus::InfeasibleStart;
        return res;
    }
    if (b.size() > 0 && b.minCoeff() < -tolerance) {
        res.status = LpStatus::InfeasibleStart;
        return res;
    }
    Tableau tab(a, b.cwiseMax(0.0), tolerance);
    std::vector<bool> barred(static_cast<std::size_t>(tab.width()), false);
    res.status = tab.optimize(c, barred, res.pivots);
    if (res.status == LpStatus::Optimal && secondary) {
        const Eigen::RowVectorXd d = tab.reduced(c);
        for (Index j = 0; j < tab.width(); ++j) barred[static_cast<std::size_t>(j)] = d(j) < -tolerance;
        res.status = tab.optimize(*secondary, barred, res.pivots);
    }
    res.x = tab.solution();
    res.objective = c.dot(res.x);
    return res;
}

}  // namespace flexgrid
