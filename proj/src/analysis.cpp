// Copyright (c) 2026 hyperlab authors
// SPDX-License-Identifier: Apache-2.0
#include "hlab/analysis.hpp"

#include <Eigen/Dense>
#include <Eigen/SVD>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "hlab/checkpoint.hpp"

namespace hlab {

namespace {

using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

EigenRowMajor to_eigen(const Matrix& m) {
    return Eigen::Map<const EigenRowMajor>(m.data().data(), static_cast<Eigen::Index>(m.rows()),
                                           static_cast<Eigen::Index>(m.cols()));
}

Matrix from_eigen(const EigenRowMajor& e) {
    Matrix out(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
    for (Eigen::Index i = 0; i < e.rows(); ++i)
        for (Eigen::Index j = 0; j < e.cols(); ++j)
            out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j)) = e(i, j);
    return out;
}

constexpr double kRadToDeg = 180.0 / 3.14159265358979323846;

}  // namespace

Matrix orth_basis(const Matrix& w, std::optional<std::size_t> k, double tol) {
    if (w.rows() == 0 || w.cols() == 0)
        throw std::invalid_argument("orth_basis: empty matrix");
    Eigen::JacobiSVD<EigenRowMajor> svd(to_eigen(w), Eigen::ComputeThinU);
    const auto& sigma = svd.singularValues();
    if (sigma.size() == 0 || sigma(0) <= 0.0)
        throw std::invalid_argument("orth_basis: zero matrix has no column space");
    std::size_t rank = 0;
    for (Eigen::Index i = 0; i < sigma.size(); ++i)
        if (sigma(i) >= tol * sigma(0)) ++rank;
    std::size_t use = k.has_value() ? std::min<std::size_t>(*k, static_cast<std::size_t>(sigma.size()))
                                    : rank;
    if (use == 0) throw std::invalid_argument("orth_basis: requested empty basis");
    EigenRowMajor basis =
        svd.matrixU().leftCols(static_cast<Eigen::Index>(use)).eval();
    return from_eigen(basis);
}

std::vector<double> principal_angles(const Matrix& q1, const Matrix& q2) {
    if (q1.rows() != q2.rows())
        throw std::invalid_argument("principal_angles: ambient dimensions differ (" +
                                    q1.shape_str() + " vs " + q2.shape_str() + ")");
    auto check_orthonormal = [](const Matrix& q, const char* which) {
        const EigenRowMajor e = to_eigen(q);
        const EigenRowMajor gram = e.transpose() * e;
        const double err =
            (gram - EigenRowMajor::Identity(gram.rows(), gram.cols())).cwiseAbs().maxCoeff();
        if (err > 1e-6)
            throw std::invalid_argument(std::string("principal_angles: ") + which +
                                        " is not orthonormal (deviation " + std::to_string(err) +
                                        ")");
    };
    check_orthonormal(q1, "Q1");
    check_orthonormal(q2, "Q2");

    const EigenRowMajor e1 = to_eigen(q1);
    const EigenRowMajor e2 = to_eigen(q2);
    const EigenRowMajor cross = e1.transpose() * e2;
    Eigen::JacobiSVD<EigenRowMajor> svd_cos(cross);
    // Bjorck-Golub: arccos of the cosines loses precision for small angles,
    // so those are recomputed from the sines of the residual Q2 - Q1(Q1'Q2).
    const EigenRowMajor residual = e2 - e1 * cross;
    Eigen::JacobiSVD<EigenRowMajor> svd_sin(residual);
    const Eigen::Index n = svd_cos.singularValues().size();
    std::vector<double> angles;
    for (Eigen::Index i = 0; i < n; ++i) {
        const double c = std::clamp(svd_cos.singularValues()(i), 0.0, 1.0);
        // cosines descend while the matching sines ascend
        const double s = std::clamp(svd_sin.singularValues()(n - 1 - i), 0.0, 1.0);
        angles.push_back((c * c > 0.5 ? std::asin(s) : std::acos(c)) * kRadToDeg);
    }
    std::sort(angles.begin(), angles.end());
    return angles;
}

namespace {

bool ssa_kind(ParamKind k) {
    switch (k) {
        case ParamKind::K:
        case ParamKind::Q:
        case ParamKind::V:
        case ParamKind::O:
        case ParamKind::W1:
        case ParamKind::W2: return true;
        default: return false;
    }
}

SsaEntry ssa_entry(const ParamAddress& a, const Matrix& w, const Matrix& w_adapted,
                   std::optional<std::size_t> k, double tol) {
    SsaEntry e;
    e.address = a;
    if (w.bit_equal(w_adapted)) {
        // untouched weights measure exactly zero, not floating-point fuzz
        Matrix q = orth_basis(w, k, tol);
        e.k = q.cols();
        e.angles_deg.assign(e.k, 0.0);
        return e;
    }
    // shared dimension so the two bases live in comparable subspaces
    Matrix q1 = orth_basis(w, k, tol);
    Matrix q2 = orth_basis(w_adapted, k, tol);
    const std::size_t shared = std::min(q1.cols(), q2.cols());
    if (q1.cols() != shared) q1 = orth_basis(w, shared, tol);
    if (q2.cols() != shared) q2 = orth_basis(w_adapted, shared, tol);
    e.k = shared;
    e.angles_deg = principal_angles(q1, q2);
    e.mean_angle_deg =
        std::accumulate(e.angles_deg.begin(), e.angles_deg.end(), 0.0) /
        static_cast<double>(e.angles_deg.size());
    return e;
}

}  // namespace

SsaReport ssa_report(const ModelParams& base, const DeltaMap& deltas,
                     std::optional<std::size_t> top_k, double tol) {
    for (const auto& [a, dw] : deltas) {
        if (!base.has(a))
            throw std::invalid_argument("ssa_report: delta at unknown address " + a.str());
        if (!dw.same_shape(base.at(a)))
            throw std::invalid_argument("ssa_report: delta shape mismatch at " + a.str());
    }
    SsaReport report;
    report.tol = tol;
    for (const auto& [a, w] : base.weights()) {
        if (!ssa_kind(a.kind)) continue;
        Matrix adapted = w;
        const auto it = deltas.find(a);
        if (it != deltas.end()) adapted = add(w, it->second);
        report.full_rank.push_back(ssa_entry(a, w, adapted, std::nullopt, tol));
        const std::size_t k = top_k.value_or(
            (std::min(w.rows(), w.cols()) + 3) / 4);  // ceil(min/4) default
        report.top_k_used = k;
        report.top_k.push_back(ssa_entry(a, w, adapted, k, tol));
    }
    return report;
}

SsaReport ssa_report(const ModelParams& base, const ModelParams& adapted,
                     std::optional<std::size_t> top_k, double tol) {
    if (base.weights().size() != adapted.weights().size())
        throw std::invalid_argument("ssa_report: checkpoints have different address sets");
    DeltaMap deltas;
    for (const auto& [a, w] : base.weights()) {
        if (!adapted.has(a))
            throw std::invalid_argument("ssa_report: adapted checkpoint missing " + a.str());
        const Matrix& wa = adapted.at(a);
        if (!wa.bit_equal(w)) deltas.emplace(a, sub(wa, w));
    }
    return ssa_report(base, deltas, top_k, tol);
}

void write_ssa_csv(const SsaReport& report, const std::string& path) {
    std::ostringstream csv;
    csv << "component,layer,attn,kind,k,mean_angle_deg,angles_json\n";
    csv.precision(12);
    auto emit = [&](const std::vector<SsaEntry>& entries) {
        for (const SsaEntry& e : entries) {
            csv << to_string(e.address.component) << ',' << e.address.layer << ','
                << to_string(e.address.attn) << ',' << to_string(e.address.kind) << ',' << e.k
                << ',' << e.mean_angle_deg << ",\"[";
            for (std::size_t i = 0; i < e.angles_deg.size(); ++i)
                csv << (i ? "," : "") << e.angles_deg[i];
            csv << "]\"\n";
        }
    };
    emit(report.full_rank);
    emit(report.top_k);
    atomic_write_file(path, csv.str());
}

Matrix pca_2d(const Matrix& points) {
    if (points.rows() < 2) throw std::invalid_argument("pca_2d: need at least 2 points");
    EigenRowMajor x = to_eigen(points);
    const Eigen::RowVectorXd mean = x.colwise().mean();
    x.rowwise() -= mean;
    Eigen::BDCSVD<EigenRowMajor> svd(x, Eigen::ComputeThinV);
    Matrix out(points.rows(), 2);
    const Eigen::Index n_comp = std::min<Eigen::Index>(2, svd.matrixV().cols());
    for (Eigen::Index c = 0; c < n_comp; ++c) {
        if (svd.singularValues()(c) <= 0.0) break;  // degenerate direction stays zero
        const Eigen::VectorXd proj = x * svd.matrixV().col(c);
        for (Eigen::Index i = 0; i < proj.size(); ++i)
            out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(c)) = proj(i);
    }
    return out;
}

}  // namespace hlab
