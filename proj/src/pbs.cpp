#include "avatar/pbs.hpp"

#include "avatar/gaussian.hpp"

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <cmath>

namespace avatar {

namespace {

constexpr double kSmoothEps = 1e-8;   // epsilon inside sqrt(x^2 + eps)
constexpr double kRidge = 1e-9;       // stabilizes degenerate normal equations
constexpr double kRelTol = 1e-13;
constexpr int kMaxOuter = 300;

double smooth_abs(double x) { return std::sqrt(x * x + kSmoothEps); }

}  // namespace

PatchBlendshapeBasis build_basis(const std::vector<Mesh>& shapes, const PatchLayout& layout) {
    require(shapes.size() >= 2, "basis needs at least two shapes");
    const int k = static_cast<int>(shapes.size());
    const int v = static_cast<int>(shapes[0].vertices.size());
    for (const auto& s : shapes)
        require(static_cast<int>(s.vertices.size()) == v && s.faces == shapes[0].faces,
                "basis shapes must share topology");
    validate_layout(layout, v);

    PatchBlendshapeBasis basis;
    basis.layout = layout;
    basis.shape_count = k;
    basis.vertex_count = v;
    const int p_count = static_cast<int>(layout.patches.size());
    basis.neutral.resize(p_count);
    basis.deltas.resize(p_count);
    for (int p = 0; p < p_count; ++p) {
        const auto& members = layout.patches[p].vertices;
        const int vp = static_cast<int>(members.size());
        MatX n(vp, 3);
        for (int j = 0; j < vp; ++j) n.row(j) = shapes[0].vertices[members[j]].transpose();
        basis.neutral[p] = n;
        basis.deltas[p].reserve(k - 1);
        for (int i = 1; i < k; ++i) {
            MatX d(vp, 3);
            for (int j = 0; j < vp; ++j)
                d.row(j) = (shapes[i].vertices[members[j]] - shapes[0].vertices[members[j]])
                               .transpose();
            basis.deltas[p].push_back(std::move(d));
        }
    }
    return basis;
}

MatX eval_patch_model(const PatchBlendshapeBasis& basis, int patch, const VecX& beta_p) {
    require(patch >= 0 && patch < basis.patch_count(), "patch index out of range");
    require(beta_p.size() == basis.weight_count(), "beta length must be K-1");
    MatX x = basis.neutral[patch];
    for (int i = 0; i < basis.weight_count(); ++i) x += beta_p[i] * basis.deltas[patch][i];
    return x;
}

Mesh eval_full_model(const PatchBlendshapeBasis& basis, const Mesh& reference, const MatX& beta) {
    require(static_cast<int>(reference.vertices.size()) == basis.vertex_count,
            "reference mesh does not match basis topology");
    require(beta.rows() == basis.patch_count() && beta.cols() == basis.weight_count(),
            "beta must be P x (K-1)");
    Mesh out = reference;
    for (int p = 0; p < basis.patch_count(); ++p) {
        MatX x = eval_patch_model(basis, p, beta.row(p).transpose());
        const auto& members = basis.layout.patches[p].vertices;
        for (size_t j = 0; j < members.size(); ++j)
            out.vertices[members[j]] = x.row(static_cast<int>(j)).transpose();
    }
    compute_vertex_normals(out);
    return out;
}

Mat3 RigidTransform::rotation() const { return quat_to_rotation(quat); }

RigidTransform RigidTransform::from_matrix(const Mat3& r, const Vec3& t) {
    Eigen::Quaterniond q(r);
    q.normalize();
    RigidTransform out;
    out.quat = Vec4(q.w(), q.x(), q.y(), q.z());
    out.translation = t;
    return out;
}

PbsEnergy energy(const PatchBlendshapeBasis& basis, const Mesh& target, const MatX& beta,
                 const RigidTransform& rigid, const PbsWeights& weights) {
    require(static_cast<int>(target.vertices.size()) == basis.vertex_count,
            "target mesh does not match basis topology");
    require(beta.rows() == basis.patch_count() && beta.cols() == basis.weight_count(),
            "beta must be P x (K-1)");
    PbsEnergy e;
    const Mat3 rot = rigid.rotation();
    for (int p = 0; p < basis.patch_count(); ++p) {
        MatX x = eval_patch_model(basis, p, beta.row(p).transpose());
        const auto& members = basis.layout.patches[p].vertices;
        for (size_t j = 0; j < members.size(); ++j) {
            Vec3 model = rot * x.row(static_cast<int>(j)).transpose() + rigid.translation;
            e.ls += (target.vertices[members[j]] - model).squaredNorm();
        }
    }
    e.reg = beta.array().abs().sum();
    for (int p = 0; p < basis.patch_count(); ++p)
        for (int q : basis.layout.patches[p].neighbors)
            e.overlap += (beta.row(p) - beta.row(q)).array().abs().sum();
    e.total = weights.lambda_ls * e.ls + weights.lambda_reg * e.reg + weights.lambda_o * e.overlap;
    return e;
}

namespace {

// Smoothed counterpart of `energy` — the quantity IRLS actually decreases.
double smoothed_energy(const PatchBlendshapeBasis& basis, const Mesh& target, const MatX& beta,
                       const RigidTransform& rigid, const PbsWeights& weights) {
    PbsEnergy e = energy(basis, target, beta, rigid, weights);
    double reg_s = 0, overlap_s = 0;
    for (int p = 0; p < beta.rows(); ++p)
        for (int i = 0; i < beta.cols(); ++i) reg_s += smooth_abs(beta(p, i));
    for (int p = 0; p < basis.patch_count(); ++p)
        for (int q : basis.layout.patches[p].neighbors)
            for (int i = 0; i < beta.cols(); ++i)
                overlap_s += smooth_abs(beta(p, i) - beta(q, i));
    return weights.lambda_ls * e.ls + weights.lambda_reg * reg_s + weights.lambda_o * overlap_s;
}

// Optimal rigid transform aligning the current patch model to the target
// (orthogonal Procrustes over all member-vertex correspondences).
RigidTransform fit_rigid(const PatchBlendshapeBasis& basis, const Mesh& target, const MatX& beta) {
    Vec3 mean_model = Vec3::Zero(), mean_target = Vec3::Zero();
    long n = 0;
    std::vector<MatX> model(basis.patch_count());
    for (int p = 0; p < basis.patch_count(); ++p) {
        model[p] = eval_patch_model(basis, p, beta.row(p).transpose());
        const auto& members = basis.layout.patches[p].vertices;
        for (size_t j = 0; j < members.size(); ++j) {
            mean_model += model[p].row(static_cast<int>(j)).transpose();
            mean_target += target.vertices[members[j]];
            ++n;
        }
    }
    require(n >= 3, "rigid fit needs at least three correspondences");
    mean_model /= static_cast<double>(n);
    mean_target /= static_cast<double>(n);

    Mat3 h = Mat3::Zero();
    for (int p = 0; p < basis.patch_count(); ++p) {
        const auto& members = basis.layout.patches[p].vertices;
        for (size_t j = 0; j < members.size(); ++j)
            h += (model[p].row(static_cast<int>(j)).transpose() - mean_model) *
                 (target.vertices[members[j]] - mean_target).transpose();
    }
    Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
    Mat3 d = Mat3::Identity();
    d(2, 2) = (svd.matrixV() * svd.matrixU().transpose()).determinant() < 0 ? -1.0 : 1.0;
    Mat3 rot = svd.matrixV() * d * svd.matrixU().transpose();
    return RigidTransform::from_matrix(rot, mean_target - rot * mean_model);
}

// One IRLS-reweighted sparse least-squares solve for all beta jointly.
MatX beta_irls_step(const PatchBlendshapeBasis& basis, const Mesh& target,
                    const PbsWeights& weights, const RigidTransform& rigid, const MatX& beta) {
    const int p_count = basis.patch_count();
    const int kw = basis.weight_count();
    const int n = p_count * kw;
    const Mat3 rot_t = rigid.rotation().transpose();

    std::vector<Eigen::Triplet<double>> trips;
    VecX rhs = VecX::Zero(n);

    for (int p = 0; p < p_count; ++p) {
        const auto& members = basis.layout.patches[p].vertices;
        const int vp = static_cast<int>(members.size());
        // residual rows: z = R^T (x_target - t) - neutral, columns = deltas
        MatX d(3 * vp, kw);
        VecX z(3 * vp);
        for (int j = 0; j < vp; ++j) {
            Vec3 zj = rot_t * (target.vertices[members[j]] - rigid.translation) -
                      basis.neutral[p].row(j).transpose();
            z.segment<3>(3 * j) = zj;
            for (int i = 0; i < kw; ++i)
                d.block<3, 1>(3 * j, i) = basis.deltas[p][i].row(j).transpose();
        }
        MatX ata = 2.0 * weights.lambda_ls * (d.transpose() * d);
        VecX atb = 2.0 * weights.lambda_ls * (d.transpose() * z);
        for (int a = 0; a < kw; ++a) {
            rhs[p * kw + a] += atb[a];
            for (int b = 0; b < kw; ++b)
                trips.emplace_back(p * kw + a, p * kw + b, ata(a, b));
        }
    }

    // majorized |x| = x^2 / (2 w) + w/2 with w from the previous iterate
    if (weights.lambda_reg > 0)
        for (int p = 0; p < p_count; ++p)
            for (int i = 0; i < kw; ++i)
                trips.emplace_back(p * kw + i, p * kw + i,
                                   weights.lambda_reg / smooth_abs(beta(p, i)));
    if (weights.lambda_o > 0)
        for (int p = 0; p < p_count; ++p)
            for (int q : basis.layout.patches[p].neighbors)
                for (int i = 0; i < kw; ++i) {
                    double w = weights.lambda_o / smooth_abs(beta(p, i) - beta(q, i));
                    trips.emplace_back(p * kw + i, p * kw + i, w);
                    trips.emplace_back(q * kw + i, q * kw + i, w);
                    trips.emplace_back(p * kw + i, q * kw + i, -w);
                    trips.emplace_back(q * kw + i, p * kw + i, -w);
                }
    for (int i = 0; i < n; ++i) trips.emplace_back(i, i, kRidge);

    Eigen::SparseMatrix<double> a(n, n);
    a.setFromTriplets(trips.begin(), trips.end());
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> solver(a);
    require(solver.info() == Eigen::Success, "pbs normal equations factorization failed");
    VecX sol = solver.solve(rhs);
    require(solver.info() == Eigen::Success, "pbs normal equations solve failed");

    MatX out(p_count, kw);
    for (int p = 0; p < p_count; ++p)
        for (int i = 0; i < kw; ++i) out(p, i) = sol[p * kw + i];
    return out;
}

}  // namespace

MatX solve_beta_given_rigid(const PatchBlendshapeBasis& basis, const Mesh& target,
                            const PbsWeights& weights, const RigidTransform& rigid,
                            const MatX& beta_init, int max_iters) {
    MatX beta = beta_init;
    double prev = smoothed_energy(basis, target, beta, rigid, weights);
    for (int it = 0; it < max_iters; ++it) {
        beta = beta_irls_step(basis, target, weights, rigid, beta);
        double cur = smoothed_energy(basis, target, beta, rigid, weights);
        require(std::isfinite(cur), "pbs beta solve produced non-finite energy");
        if (prev - cur < kRelTol * std::max(prev, 1e-12)) break;
        prev = cur;
    }
    return beta;
}

PbsSolveResult solve_frame(const PatchBlendshapeBasis& basis, const Mesh& target,
                           const PbsWeights& weights, const MatX* init) {
    require(weights.lambda_ls > 0, "lambda_ls must be positive");
    require(static_cast<int>(target.vertices.size()) == basis.vertex_count,
            "target mesh does not match basis topology");

    PbsSolveResult res;
    res.beta = init ? *init : MatX::Zero(basis.patch_count(), basis.weight_count());
    require(res.beta.rows() == basis.patch_count() && res.beta.cols() == basis.weight_count(),
            "init beta must be P x (K-1)");

    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < kMaxOuter; ++it) {
        res.rigid = fit_rigid(basis, target, res.beta);
        res.beta = beta_irls_step(basis, target, weights, res.rigid, res.beta);
        double cur = smoothed_energy(basis, target, res.beta, res.rigid, weights);
        if (!std::isfinite(cur))
            fail("pbs solve diverged at outer iteration " + std::to_string(it));
        res.trace.push_back(cur);
        res.iterations = it + 1;
        if (std::isfinite(prev) && prev - cur < kRelTol * std::max(prev, 1e-12)) break;
        prev = cur;
    }
    res.final_energy = energy(basis, target, res.beta, res.rigid, weights);
    return res;
}

std::vector<PbsSolveResult> solve_sequence(const PatchBlendshapeBasis& basis,
                                           const std::vector<Mesh>& frames,
                                           const PbsWeights& weights) {
    require(!frames.empty(), "empty mesh sequence");
    std::vector<PbsSolveResult> out;
    out.reserve(frames.size());
    const MatX* warm = nullptr;
    for (size_t t = 0; t < frames.size(); ++t) {
        try {
            out.push_back(solve_frame(basis, frames[t], weights, warm));
        } catch (const std::exception& e) {
            fail("frame " + std::to_string(t) + ": " + e.what());
        }
        warm = &out.back().beta;
    }
    return out;
}

}  // namespace avatar
