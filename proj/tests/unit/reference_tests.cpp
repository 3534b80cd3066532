#include "fcm/reference.hpp"

#include "test_support.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

using namespace fcm;

namespace {

ReferenceGridParams coarse_grid() {
    ReferenceGridParams grid;
    grid.nu = 101;
    grid.nv = 81;
    return grid;
}

const ReferenceField& coarse_field() {
    static const ReferenceField field = solve_reference(RegionSpec::triple_well_defaults(), 2.0, coarse_grid());
    return field;
}

}  // namespace

TEST_CASE("reference solution stays in [0,1] with exact boundary values", "[reference]") {
    const ReferenceField& field = coarse_field();
    REQUIRE(field.values.minCoeff() >= 0.0);
    REQUIRE(field.values.maxCoeff() <= 1.0);
    for (Index i = 0; i < field.nu; ++i)
        for (Index j = 0; j < field.nv; ++j) {
            const NodeMask m = field.mask[static_cast<std::size_t>(i * field.nv + j)];
            if (m == NodeMask::A) REQUIRE(field.values(i, j) == 0.0);
            if (m == NodeMask::B) REQUIRE(field.values(i, j) == 1.0);
        }
}

TEST_CASE("reference solution is antisymmetric under u-reflection", "[reference]") {
    const ReferenceField& field = coarse_field();
    // grid is symmetric in u: node i mirrors to nu-1-i
    double worst = 0.0;
    for (Index i = 0; i < field.nu; ++i)
        for (Index j = 0; j < field.nv; ++j) {
            const NodeMask m = field.mask[static_cast<std::size_t>(i * field.nv + j)];
            if (m != NodeMask::Omega) continue;
            worst = std::max(worst, std::abs(field.values(i, j) + field.values(field.nu - 1 - i, j) - 1.0));
        }
    REQUIRE(worst <= 1e-6);
}

TEST_CASE("reference solver rejects regions missing from the grid", "[reference]") {
    const RegionSpec outside(BallPredicate{-40.0, 0.0, 0.3}, BallPredicate{1.0, 0.0, 0.3});
    REQUIRE_THROWS_AS(solve_reference(outside, 2.0, coarse_grid()), InvalidRegionError);
}

TEST_CASE("bilinear interpolation matches node values and rejects exterior points", "[reference]") {
    const ReferenceField& field = coarse_field();
    REQUIRE(field.interpolate(field.u_at(30), field.v_at(40)) ==
            Catch::Approx(field.values(30, 40)).margin(1e-14));
    REQUIRE(field.interpolate(field.u_max, field.v_max) ==
            Catch::Approx(field.values(field.nu - 1, field.nv - 1)).margin(1e-14));
    REQUIRE(!field.contains(field.u_max + 0.1, 0.0));
    REQUIRE_THROWS_AS(field.interpolate(field.u_max + 0.1, 0.0), InvalidArgumentError);
}

TEST_CASE("mc_committor basin, symmetry, and edge behavior", "[reference]") {
    const RegionSpec regions = RegionSpec::triple_well_defaults();
    Vector deep_a(2);
    deep_a << -0.65, 0.0;  // next to the A ball, inside its basin

    McOptions options;
    options.n_traj = 400;
    options.dt = 1e-3;
    const McResult near_a = mc_committor(deep_a, regions, 2.0, options, 900);
    REQUIRE(near_a.completed == options.n_traj);
    REQUIRE(near_a.estimate <= 0.1);

    Vector mid(2);
    mid << 0.35, 1.0;
    Vector mirrored(2);
    mirrored << -0.35, 1.0;
    const McResult right = mc_committor(mid, regions, 2.0, options, 901);
    const McResult left = mc_committor(mirrored, regions, 2.0, options, 902);
    const double se = std::sqrt(0.25 / static_cast<double>(options.n_traj));
    REQUIRE(std::abs(right.estimate + left.estimate - 1.0) <= 3.0 * 2.0 * se);

    McOptions single = options;
    single.n_traj = 1;
    const McResult one = mc_committor(mid, regions, 2.0, single, 903);
    REQUIRE((one.estimate == 0.0 || one.estimate == 1.0));

    McOptions capped = options;
    capped.n_traj = 4;
    capped.max_steps = 50;  // far too short to reach either set
    REQUIRE_THROWS_AS(mc_committor(mid, regions, 2.0, capped, 904), NonConvergenceError);

    Vector inside_a(2);
    inside_a << -1.0, 0.0;
    REQUIRE_THROWS_AS(mc_committor(inside_a, regions, 2.0, options, 905), InvalidArgumentError);
}

TEST_CASE("mc_committor agrees with the PDE solution at a spot-check point", "[reference]") {
    const RegionSpec regions = RegionSpec::triple_well_defaults();
    Vector probe(2);
    probe << 0.45, 0.55;
    McOptions options;
    options.n_traj = 2500;
    options.dt = 2e-4;
    const McResult mc = mc_committor(probe, regions, 2.0, options, 906);
    const double pde = coarse_field().interpolate(probe[0], probe[1]);
    REQUIRE(mc.estimate == Catch::Approx(pde).margin(0.05));
}

TEST_CASE("evaluate_mse closed forms, weighting, and exclusions", "[reference]") {
    ReferenceField ones{-2.0, 2.0, -2.0, 2.0, 5, 5, Matrix::Ones(5, 5), {}};
    Rng rng(907);
    TrajectoryDataset data = test::random_omega_dataset(40, 2, rng);

    const auto match = [&](const Vector&, Region) { return 1.0; };
    const MseResult zero = evaluate_mse_with(match, data, ones);
    // interpolating a constant field leaves only rounding residue
    REQUIRE(zero.weighted <= 1e-30);
    REQUIRE(zero.unweighted <= 1e-30);
    REQUIRE(zero.used == 40);

    const auto cold = [&](const Vector&, Region) { return 0.0; };
    const MseResult one = evaluate_mse_with(cold, data, ones);
    REQUIRE(one.weighted == Catch::Approx(1.0).epsilon(1e-12));
    REQUIRE(one.unweighted == Catch::Approx(1.0).epsilon(1e-12));

    // weight rescaling cannot change the normalized weighted mean
    Rng rng2(908);
    const auto noisy = [&](const Vector& p, Region) { return 0.5 * std::sin(p[0] * 3.0); };
    const MseResult base = evaluate_mse_with(noisy, data, ones);
    TrajectoryDataset scaled = data;
    scaled.w *= 123.5;
    const MseResult rescaled = evaluate_mse_with(noisy, scaled, ones);
    REQUIRE(base.weighted == Catch::Approx(rescaled.weighted).epsilon(1e-13));

    // a point outside the grid is excluded and counted
    data.x(0, 0) = 3.5;
    const MseResult excl = evaluate_mse_with(match, data, ones);
    REQUIRE(excl.excluded == 1);
    REQUIRE(excl.used == 39);

    // boundary-labeled start points are skipped silently
    data.x_region[1] = Region::A;
    const MseResult skipped = evaluate_mse_with(match, data, ones);
    REQUIRE(skipped.used == 38);
}

TEST_CASE("reference field files round-trip bitwise", "[reference]") {
    const ReferenceField& field = coarse_field();
    const std::string p1 = "/tmp/fcm_field_rt1.csv";
    const std::string p2 = "/tmp/fcm_field_rt2.csv";
    write_reference(field, p1, {{"seed", "0"}});
    const ReferenceField loaded = read_reference(p1);
    REQUIRE(loaded.nu == field.nu);
    REQUIRE(loaded.nv == field.nv);
    REQUIRE(loaded.values == field.values);
    write_reference(loaded, p2, {{"seed", "0"}});
    std::ostringstream b1, b2;
    b1 << std::ifstream(p1).rdbuf();
    b2 << std::ifstream(p2).rdbuf();
    REQUIRE(b1.str() == b2.str());
    std::remove(p1.c_str());
    std::remove(p2.c_str());
}
