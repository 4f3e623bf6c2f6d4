#include "bspdot/applications.hpp"
#include "bspdot/error.hpp"
#include "support.hpp"

#include <doctest.h>

using namespace bspdot;
using namespace bspdot::testing;

namespace {

MwOptions tight() {
  MwOptions o;
  o.solver.method = Method::ConjugateGradient;
  o.solver.line_search = LineSearch::Wolfe;
  o.solver.grad_tol = 1e-9;
  o.solver.max_iter = 5000;
  o.balance.tol = 1e-13;
  return o;
}

TensorField random_field(Rng& rng, std::vector<int> shape, int d) {
  int sites = 1;
  for (int s : shape) sites *= s;
  std::vector<Matrix> blocks;
  for (int k = 0; k < sites; ++k) blocks.push_back(rng.spd(d, 0.5));
  return TensorField::on_grid(std::move(shape), std::move(blocks));
}

double max_block_diff(const std::vector<Matrix>& a, const std::vector<Matrix>& b) {
  double worst = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) worst = std::max(worst, (a[k] - b[k]).norm());
  return worst;
}

}  // namespace

TEST_SUITE("applications") {
  TEST_CASE("grid positions") {
    const auto line = grid_positions({3});
    CHECK(line[1](0) == doctest::Approx(0.5));
    CHECK(grid_positions({1})[0](0) == doctest::Approx(0.5));
    const auto plane = grid_positions({2, 3});
    REQUIRE(plane.size() == 6);
    CHECK(plane[4](0) == doctest::Approx(0.5));
    CHECK(plane[4](1) == doctest::Approx(1.0));
  }

  TEST_CASE("fields normalize and validate") {
    Rng rng(71);
    const TensorField f = random_field(rng, {2, 2}, 2);
    CHECK(f.normalized);
    CHECK((f.total() - Matrix::Identity(2, 2)).norm() < 1e-12);
    CHECK_NOTHROW(f.validate());
    TensorField bad = f;
    bad.blocks.pop_back();
    CHECK_THROWS_AS(bad.validate(), Error);
  }

  TEST_CASE("interpolation endpoints and mass conservation") {
    Rng rng(72);
    const TensorField p = random_field(rng, {3}, 2);
    const TensorField q = random_field(rng, {3}, 2);
    const auto r = transport_fields(p, q, 0.05, tight());
    for (double t : {0.0, 0.3, 0.7, 1.0}) {
      const TensorField f = displacement_interpolate(p, q, r.coupling, t, {3});
      CHECK((f.total() - Matrix::Identity(2, 2)).norm() < 1e-9);
    }
    CHECK(max_block_diff(displacement_interpolate(p, q, r.coupling, 0.0, {3}).blocks, p.blocks) < 1e-9);
    CHECK(max_block_diff(displacement_interpolate(p, q, r.coupling, 1.0, {3}).blocks, q.blocks) < 1e-9);
    DisplacementOptions sym;
    sym.mode = DisplacementMode::SymmetrizedProduct;
    CHECK(max_block_diff(displacement_interpolate(p, q, r.coupling, 0.0, {3}, sym).blocks, p.blocks) < 1e-8);
    CHECK(max_block_diff(linear_interpolate(p, q, 0.0).blocks, p.blocks) == 0.0);
    CHECK(max_block_diff(linear_interpolate(p, q, 1.0).blocks, q.blocks) < 1e-15);
  }

  TEST_CASE("projection through the identity coupling returns the targets") {
    Rng rng(73);
    const auto p = rng.spd_marginal(3, 2);
    BlockMatrix g(3, 3, 2);
    std::vector<Matrix> ys;
    for (int i = 0; i < 3; ++i) {
      g(i, i) = p[i];
      ys.push_back(rng.spd(2));
    }
    for (auto mode : {ProjectionMode::General, ProjectionMode::SpdLyapunov}) {
      const auto r = barycentric_project(g, p, ys, mode);
      CHECK(max_block_diff(r.projected, ys) < 1e-10);
      CHECK(r.indefinite.empty());
    }
  }

  TEST_CASE("lifted couplings reduce to scalar barycentric averages") {
    Rng rng(74);
    const auto pw = rng.simplex(3);
    const auto qw = rng.simplex(4);
    const Matrix gamma = scalar_sinkhorn(pw, qw, rng.gaussian(3, 4).cwiseAbs(), 0.5);
    BlockMatrix g(3, 4, 2);
    std::vector<Matrix> ys;
    for (int j = 0; j < 4; ++j) ys.push_back(rng.spd(2));
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) g(i, j) = gamma(i, j) * Matrix::Identity(2, 2);
    const auto p = lifted(pw, 2);
    for (auto mode : {ProjectionMode::General, ProjectionMode::SpdLyapunov}) {
      const auto r = barycentric_project(g, p, ys, mode);
      for (int i = 0; i < 3; ++i) {
        Matrix want = Matrix::Zero(2, 2);
        for (int j = 0; j < 4; ++j) want += gamma(i, j) * ys[static_cast<std::size_t>(j)];
        want /= pw[static_cast<std::size_t>(i)];
        CHECK((r.projected[static_cast<std::size_t>(i)] - want).norm() < 1e-8);
      }
    }
  }

  TEST_CASE("projection commutes with an orthogonal congruence of the targets") {
    Rng rng(75);
    const auto pw = rng.simplex(3);
    const auto p = lifted(pw, 2);
    const Matrix gamma = scalar_sinkhorn(pw, pw, rng.gaussian(3, 3).cwiseAbs(), 0.5);
    BlockMatrix g(3, 3, 2);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) g(i, j) = gamma(i, j) * Matrix::Identity(2, 2);
    const Eigen::HouseholderQR<Matrix> qr(rng.gaussian(2, 2));
    const Matrix u = qr.householderQ();
    std::vector<Matrix> ys;
    std::vector<Matrix> rotated;
    for (int j = 0; j < 3; ++j) {
      ys.push_back(rng.spd(2));
      rotated.push_back(u * ys.back() * u.transpose());
    }
    const auto a = barycentric_project(g, p, ys, ProjectionMode::SpdLyapunov);
    const auto b = barycentric_project(g, p, rotated, ProjectionMode::SpdLyapunov);
    for (int i = 0; i < 3; ++i)
      CHECK((u * a.projected[static_cast<std::size_t>(i)] * u.transpose() -
             b.projected[static_cast<std::size_t>(i)]).norm() < 1e-9);
  }

  TEST_CASE("covariance descriptors are SPD") {
    Rng rng(76);
    CHECK(is_spd(covariance_descriptor(rng.gaussian(3, 1))));
    const Matrix x = rng.gaussian(2, 50);
    CHECK((covariance_descriptor(x) - x * x.transpose() / 50.0).norm() < 1e-14);
    CHECK_THROWS_AS(make_covariance_set({x, x}, {0}), Error);
  }

  TEST_CASE("adaptation trivial cases") {
    Rng rng(77);
    AdaptationData data;
    data.source_size = 8;
    data.target_size = 8;
    const auto [source, target] = synthesize_adaptation(data, rng);
    CHECK(source.size() == 8);
    CHECK(target.size() == 8);
    AdaptationConfig config;
    config.solve = tight();
    config.relative_epsilon = true;
    config.sinkhorn_tol = 1e-8;
    const auto same = adapt_and_classify(source, source, 0.01, config);
    CHECK(same.accuracy == doctest::Approx(1.0));
    LabeledCovarianceSet one = target;
    for (auto& l : one.labels) l = 0;
    LabeledCovarianceSet src = source;
    for (auto& l : src.labels) l = 0;
    const auto single = adapt_and_classify(src, one, 0.05, config);
    CHECK(single.accuracy == doctest::Approx(1.0));
    CHECK(single.baseline_accuracy == doctest::Approx(1.0));
  }
}
