#include <doctest.h>

#include <cmath>

#include "airway/losses.hpp"
#include "airway/morphology.hpp"
#include "airway/synth.hpp"
#include "test_support.hpp"

using airway::SupervisionPyramid;
using airway::Volume;

// ---- hard region ----------------------------------------------------------------

TEST_CASE("hard region is empty when gt equals the trachea") {
    Volume gt = testsup::random_mask(6, 6, 6, 0.3, 1);
    Volume hr = airway::hard_region(gt, gt);
    CHECK(hr.count_nonzero() == 0);
}

TEST_CASE("hard region with empty trachea is the dilated gt") {
    Volume gt = testsup::random_mask(6, 6, 6, 0.2, 2);
    Volume empty(6, 6, 6);
    Volume hr = airway::hard_region(gt, empty);
    Volume expected = airway::dilate26(gt);
    for (std::size_t i = 0; i < gt.size(); ++i) CHECK(hr.data[i] == expected.data[i]);
}

TEST_CASE("hard region rejects dim mismatch") {
    CHECK_THROWS_AS(airway::hard_region(Volume(4, 4, 4), Volume(4, 4, 5)),
                    std::invalid_argument);
}

// ---- pyramid --------------------------------------------------------------------

TEST_CASE("pyramid of an empty mask is empty at every level") {
    SupervisionPyramid pyr = airway::build_pyramid(Volume(8, 8, 8), 3);
    REQUIRE(pyr.levels.size() == 3);
    for (const auto& level : pyr.levels) CHECK(level.count_nonzero() == 0);
}

TEST_CASE("single origin voxel survives at the origin of every level") {
    Volume m(8, 8, 8);
    m.at(0, 0, 0) = 1.0;
    SupervisionPyramid pyr = airway::build_pyramid(m, 3);
    for (const auto& level : pyr.levels) {
        CHECK(level.count_nonzero() == 1);
        CHECK(level.at(0, 0, 0) == 1.0);
    }
}

TEST_CASE("pyramid levels match independent repeated pooling on odd dims") {
    Volume m = testsup::random_mask(9, 8, 7, 0.3, 77);
    SupervisionPyramid pyr = airway::build_pyramid(m, 2);
    // Oracle: direct triple-loop pooling, twice.
    auto pool_once = [](const Volume& in) {
        Volume out((in.nx + 1) / 2, (in.ny + 1) / 2, (in.nz + 1) / 2);
        for (int z = 0; z < out.nz; ++z)
            for (int y = 0; y < out.ny; ++y)
                for (int x = 0; x < out.nx; ++x) {
                    double v = 0.0;
                    for (int dz = 0; dz < 2; ++dz)
                        for (int dy = 0; dy < 2; ++dy)
                            for (int dx = 0; dx < 2; ++dx)
                                if (in.in_bounds(2 * x + dx, 2 * y + dy, 2 * z + dz))
                                    v = std::max(v, in.at(2 * x + dx, 2 * y + dy, 2 * z + dz));
                    out.at(x, y, z) = v;
                }
        return out;
    };
    Volume l1 = pool_once(m);
    Volume l2 = pool_once(l1);
    REQUIRE(pyr.levels[0].same_dims(l1));
    REQUIRE(pyr.levels[1].same_dims(l2));
    for (std::size_t i = 0; i < l1.size(); ++i) CHECK(pyr.levels[0].data[i] == l1.data[i]);
    for (std::size_t i = 0; i < l2.size(); ++i) CHECK(pyr.levels[1].data[i] == l2.data[i]);
}

TEST_CASE("levels clamp at 1^3 instead of erroring") {
    Volume m(4, 4, 4, 1.0);
    SupervisionPyramid pyr = airway::build_pyramid(m, 6);
    CHECK(pyr.levels.back().nx == 1);
    CHECK(pyr.levels.back().at(0, 0, 0) == 1.0);
}

TEST_CASE("each level is exactly the pooled image of the previous one") {
    Volume m = testsup::random_mask(11, 10, 9, 0.25, 5);
    SupervisionPyramid pyr = airway::build_pyramid(m, 3);
    for (std::size_t h = 1; h < pyr.levels.size(); ++h) {
        Volume pooled = airway::maxpool_stride2(pyr.levels[h - 1]);
        REQUIRE(pooled.same_dims(pyr.levels[h]));
        for (std::size_t i = 0; i < pooled.size(); ++i)
            CHECK(pooled.data[i] == pyr.levels[h].data[i]);
    }
}

// ---- dice loss ------------------------------------------------------------------

TEST_CASE("perfect overlap gives zero dice loss") {
    Volume t(8, 8, 8);
    for (int i = 0; i < 100; ++i) t.data[i * 3] = 1.0;
    REQUIRE(t.count_nonzero() == 100);
    auto res = airway::dice_loss(t, t);
    CHECK(res.loss == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("all-zero prediction against |t| = 50 gives 1 - 1/51") {
    Volume t(8, 8, 8);
    for (int i = 0; i < 50; ++i) t.data[i * 5] = 1.0;
    Volume p(8, 8, 8);
    auto res = airway::dice_loss(p, t);
    CHECK(res.loss == doctest::Approx(1.0 - 1.0 / 51.0).epsilon(1e-15));
}

TEST_CASE("dice gradient matches central finite differences") {
    Volume p = testsup::random_probs(6, 6, 6, 13);
    for (auto& v : p.data) v = 0.02 + 0.96 * v;  // keep p +/- h inside [0,1]
    Volume t = testsup::random_mask(6, 6, 6, 0.4, 14);
    auto res = airway::dice_loss(p, t);
    const double h = 1e-6;
    airway::Rng pick(15);
    for (int trial = 0; trial < 64; ++trial) {
        std::size_t i = pick.next_u64() % p.size();
        Volume plus = p, minus = p;
        plus.data[i] += h;
        minus.data[i] -= h;
        double fd = (airway::dice_loss(plus, t).loss - airway::dice_loss(minus, t).loss) /
                    (2.0 * h);
        CHECK(testsup::rel_err(fd, res.grad.data[i]) < 1e-6);
    }
}

TEST_CASE("dice loss rejects out-of-range predictions") {
    Volume p(2, 2, 2, 1.5);
    Volume t(2, 2, 2);
    CHECK_THROWS_AS(airway::dice_loss(p, t), std::invalid_argument);
}

TEST_CASE("dice loss stays in [0,1) and vanishes at exact binary match") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Volume p = testsup::random_probs(5, 5, 5, 100 + seed);
        Volume t = testsup::random_mask(5, 5, 5, 0.5, 200 + seed);
        double loss = airway::dice_loss(p, t).loss;
        CHECK(loss >= 0.0);
        CHECK(loss < 1.0);
        double self = airway::dice_loss(t, t).loss;
        CHECK(self == doctest::Approx(0.0).epsilon(1e-15));
    }
}

// ---- seg loss -------------------------------------------------------------------

TEST_CASE("perfect predictions give zero total") {
    Volume gt = testsup::random_mask(8, 8, 8, 0.3, 21);
    SupervisionPyramid pyr = airway::build_pyramid(gt, 2);
    std::vector<Volume> pred_hr = {pyr.levels[0], pyr.levels[1]};
    auto rep = airway::seg_loss(gt, pred_hr, gt, pyr);
    CHECK(rep.total == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("hand-computed 2^3 seg loss, one level") {
    // gt = [1,0,0,0, 1,0,0,1], pred_full = [0.5,0.25,0,0, 1,0,0,0.75]:
    //   sum p*t = 0.5 + 1 + 0.75 = 2.25, sum p = 2.5, sum t = 3
    //   dice_full = 1 - (2*2.25 + 1)/(2.5 + 3 + 1) = 1 - 5.5/6.5 = 1/6.5
    // y_hr = gt pools to the 1^3 volume [1]; pred_hr = [0.3]:
    //   term = 1 - (2*0.3 + 1)/(0.3 + 1 + 1) = 1 - 1.6/2.3 = 0.7/2.3
    Volume gt(2, 2, 2);
    gt.data = {1, 0, 0, 0, 1, 0, 0, 1};
    Volume pred(2, 2, 2);
    pred.data = {0.5, 0.25, 0, 0, 1, 0, 0, 0.75};
    SupervisionPyramid pyr = airway::build_pyramid(gt, 1);
    Volume pred_hr(1, 1, 1, 0.3);
    auto rep = airway::seg_loss(pred, {pred_hr}, gt, pyr);
    CHECK(rep.dice_full == doctest::Approx(1.0 / 6.5).epsilon(1e-15));
    CHECK(rep.hr_terms[0] == doctest::Approx(0.7 / 2.3).epsilon(1e-15));
    CHECK(rep.total == doctest::Approx(1.0 / 6.5 + 0.7 / 2.3).epsilon(1e-15));
}

TEST_CASE("perturbing one hr prediction leaves dice_full and other terms alone") {
    Volume gt = testsup::random_mask(8, 8, 8, 0.3, 31);
    SupervisionPyramid pyr = airway::build_pyramid(gt, 2);
    std::vector<Volume> pred_hr = {pyr.levels[0], pyr.levels[1]};
    auto base = airway::seg_loss(gt, pred_hr, gt, pyr);
    pred_hr[1].data[0] = 1.0 - pred_hr[1].data[0];
    auto perturbed = airway::seg_loss(gt, pred_hr, gt, pyr);
    CHECK(perturbed.dice_full == base.dice_full);
    CHECK(perturbed.hr_terms[0] == base.hr_terms[0]);
    CHECK(perturbed.hr_terms[1] != base.hr_terms[1]);
}

TEST_CASE("loss report invariant: total is the sum of its parts") {
    Volume gt = testsup::random_mask(7, 6, 5, 0.4, 41);
    SupervisionPyramid pyr = airway::build_pyramid(gt, 3);
    std::vector<Volume> pred_hr;
    for (int h = 0; h < 3; ++h)
        pred_hr.push_back(testsup::random_probs(pyr.levels[h].nx, pyr.levels[h].ny,
                                                pyr.levels[h].nz, 50 + h));
    Volume pred = testsup::random_probs(7, 6, 5, 60);
    auto rep = airway::seg_loss(pred, pred_hr, gt, pyr);
    double sum = rep.dice_full;
    for (double t : rep.hr_terms) sum += t;
    CHECK(testsup::rel_err(rep.total, sum) < 1e-12);
}

TEST_CASE("seg loss rejects level count mismatch") {
    Volume gt(4, 4, 4);
    gt.at(0, 0, 0) = 1.0;
    SupervisionPyramid pyr = airway::build_pyramid(gt, 2);
    CHECK_THROWS_AS(airway::seg_loss(gt, {gt}, gt, pyr), std::invalid_argument);
}

// ---- gradient through the logit composition ---------------------------------------

namespace {

airway::LogitsStack random_stack(const airway::SupervisionPyramid& pyr, int nx, int ny, int nz,
                                 std::uint64_t seed, double sigma) {
    airway::LogitsStack stack;
    stack.full = Volume(nx, ny, nz);
    airway::Rng rng(seed);
    for (auto& v : stack.full.data) v = rng.normal(0, sigma);
    for (const Volume& lvl : pyr.levels) {
        Volume l(lvl.nx, lvl.ny, lvl.nz);
        for (auto& v : l.data) v = rng.normal(0, sigma);
        stack.levels.push_back(std::move(l));
    }
    return stack;
}

}  // namespace

TEST_CASE("logit-level gradient matches finite differences") {
    Volume gt = testsup::random_mask(6, 6, 6, 0.3, 71);
    SupervisionPyramid pyr = airway::build_pyramid(airway::dilate26(gt), 2);
    airway::LogitsStack stack = random_stack(pyr, 6, 6, 6, 72, 1.5);

    auto sl = airway::seg_loss_on_logits(stack, gt, pyr);
    const double h = 1e-6;
    airway::Rng pick(73);
    auto check_tensor = [&](Volume airway::LogitsStack::* fullptr, int level, int trials) {
        for (int t = 0; t < trials; ++t) {
            airway::LogitsStack plus = stack, minus = stack;
            Volume& vp = level < 0 ? plus.*fullptr : plus.levels[level];
            Volume& vm = level < 0 ? minus.*fullptr : minus.levels[level];
            const Volume& gv = level < 0 ? sl.grad.full : sl.grad.levels[level];
            std::size_t i = pick.next_u64() % vp.size();
            vp.data[i] += h;
            vm.data[i] -= h;
            double fd = (airway::seg_loss_on_logits(plus, gt, pyr).report.total -
                         airway::seg_loss_on_logits(minus, gt, pyr).report.total) /
                        (2.0 * h);
            CHECK(testsup::rel_err(fd, gv.data[i]) < 1e-5);
        }
    };
    check_tensor(&airway::LogitsStack::full, -1, 32);
    check_tensor(&airway::LogitsStack::full, 0, 16);
    check_tensor(&airway::LogitsStack::full, 1, 16);
}

TEST_CASE("total strictly decreases under a backtracked gradient step") {
    Volume gt = testsup::random_mask(6, 6, 6, 0.35, 81);
    SupervisionPyramid pyr = airway::build_pyramid(gt, 2);
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        airway::LogitsStack stack = random_stack(pyr, 6, 6, 6, 900 + seed, 2.0);
        auto sl = airway::seg_loss_on_logits(stack, gt, pyr);
        double step = 1.0;
        bool decreased = false;
        for (int k = 0; k < 40 && !decreased; ++k, step *= 0.5) {
            airway::LogitsStack moved = stack;
            for (std::size_t i = 0; i < moved.full.size(); ++i)
                moved.full.data[i] -= step * sl.grad.full.data[i];
            for (std::size_t l = 0; l < moved.levels.size(); ++l)
                for (std::size_t i = 0; i < moved.levels[l].size(); ++i)
                    moved.levels[l].data[i] -= step * sl.grad.levels[l].data[i];
            decreased =
                airway::seg_loss_on_logits(moved, gt, pyr).report.total < sl.report.total;
        }
        CHECK(decreased);
    }
}

// ---- demo -------------------------------------------------------------------------

TEST_CASE("demo fits a 16^3 synthetic mask to dice >= 0.99") {
    airway::SynthParams params;
    params.nx = params.ny = params.nz = 16;
    params.depth = 2;
    params.root_radius = 2.0;
    params.root_length = 7.0;
    airway::SyntheticCase c = airway::generate_case(5, params);
    REQUIRE(c.gt_mask.count_nonzero() > 0);
    Volume trachea = airway::main_trachea(airway::otsu_threshold(c.ct).mask);

    auto res = airway::optimize_logits_demo(c.gt_mask, trachea, 2, 500, 1.0);
    CHECK(res.dice_trajectory.back() >= 0.99);

    // Nondecreasing over the last 90% of steps, up to noise 1e-3.
    std::size_t start = res.dice_trajectory.size() / 10;
    for (std::size_t i = start + 1; i < res.dice_trajectory.size(); ++i)
        CHECK(res.dice_trajectory[i] >= res.dice_trajectory[i - 1] - 1e-3);
}

TEST_CASE("empty gt keeps the trajectory at the empty-vs-empty convention") {
    Volume gt(8, 8, 8);
    Volume trachea(8, 8, 8);
    auto res = airway::optimize_logits_demo(gt, trachea, 2, 20, 1.0);
    for (double d : res.dice_trajectory) CHECK(d == 1.0);
}

TEST_CASE("steps=1 gives a length-1 trajectory") {
    Volume gt(4, 4, 4);
    gt.at(1, 1, 1) = 1.0;
    auto res = airway::optimize_logits_demo(gt, Volume(4, 4, 4), 1, 1, 1.0);
    CHECK(res.dice_trajectory.size() == 1);
}
