#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "mwalign/objective.hpp"
#include "oracles.hpp"
#include "test_support.hpp"

using namespace mwalign;
using testing_support::random_matrix;

namespace {

std::vector<SentenceTag> tags_grid(std::size_t instances, const std::vector<std::string>& langs) {
    std::vector<SentenceTag> tags;
    for (std::size_t i = 0; i < instances; ++i)
        for (const auto& l : langs) tags.push_back({static_cast<std::int64_t>(i), l});
    return tags;
}

AlignmentConfig plain(double tau = 1.0) {
    AlignmentConfig c;
    c.tau = tau;
    c.lambda = 0.0;
    c.normalize_for_logits = false;
    return c;
}

std::vector<oracle::Sentence> to_oracle(const std::vector<SentenceTag>& tags, const Matrix& z) {
    std::vector<oracle::Sentence> out;
    for (std::size_t i = 0; i < tags.size(); ++i)
        out.push_back({tags[i].instance_id, tags[i].language, oracle::Vec(z.row(i).begin(), z.row(i).end())});
    return out;
}

// 2 instances x 2 languages: instance 0 at (1,0), instance 1 at (0,1).
Matrix two_by_two() { return Matrix::from_rows({{1, 0}, {1, 0}, {0, 1}, {0, 1}}); }

}  // namespace

TEST_CASE("group sizes") {
    AlignmentConfig cfg;
    const auto t22 = tags_grid(2, {"en", "fr"});
    const auto g = build_groups(t22, cfg);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(g.positives[i].size() == 1);
        CHECK(g.negatives[i].size() == 2);
    }
    const auto t23 = tags_grid(2, {"en", "fr", "de"});
    const auto g3 = build_groups(t23, cfg);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(g3.positives[i].size() == 2);
        CHECK(g3.negatives[i].size() == 3);
    }
    CHECK(g3.anchors.size() == 6);
}

TEST_CASE("pivot_only anchors skip instances without a pivot sentence") {
    AlignmentConfig cfg;
    cfg.anchor_mode = AnchorMode::pivot_only;
    // Instance 0: en, fr, de. Instance 1: fr, de (no en).
    const std::vector<SentenceTag> tags{{0, "en"}, {0, "fr"}, {0, "de"}, {1, "fr"}, {1, "de"}};
    const auto g = build_groups(tags, cfg);
    CHECK(g.anchors == std::vector<std::size_t>{0});
    CHECK(g.negatives[0] == std::vector<std::size_t>{3, 4});
    CHECK(g.positives[0] == std::vector<std::size_t>{1, 2});

    const std::vector<SentenceTag> no_pivot{{0, "fr"}, {1, "de"}};
    CHECK_THROWS(build_groups(no_pivot, cfg));
    const std::vector<SentenceTag> single{{0, "en"}, {0, "fr"}};
    CHECK_THROWS(build_groups(single, AlignmentConfig{}));
}

TEST_CASE("groups partition the batch on random batches") {
    Rng rng(1);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<SentenceTag> tags;
        const std::vector<std::string> langs{"en", "fr", "de", "zh"};
        const std::size_t n = 2 + rng.index(10);
        for (std::size_t i = 0; i < n; ++i)
            tags.push_back({static_cast<std::int64_t>(rng.index(4)), langs[rng.index(langs.size())]});
        tags[0].instance_id = 0;
        tags[1].instance_id = 1;
        const auto g = build_groups(tags, AlignmentConfig{});
        for (std::size_t i = 0; i < n; ++i) {
            std::multiset<std::size_t> all{i};
            all.insert(g.positives[i].begin(), g.positives[i].end());
            all.insert(g.negatives[i].begin(), g.negatives[i].end());
            CHECK(all.size() == n);
            CHECK(std::set<std::size_t>(all.begin(), all.end()).size() == n);
            for (std::size_t p : g.positives[i]) {
                const auto& back = g.positives[p];
                CHECK(std::find(back.begin(), back.end(), i) != back.end());
            }
        }
    }
}

TEST_CASE("closed-form loss values") {
    const auto t22 = tags_grid(2, {"en", "fr"});
    const auto g = build_groups(t22, plain());
    CHECK(contrastive_loss(two_by_two(), g, plain()).value == doctest::Approx(4 * (std::log(2.0) - 1)).epsilon(1e-14));

    const auto t23 = tags_grid(2, {"en", "fr", "de"});
    const Matrix same(6, 2, 0.0);
    Matrix collapsed = same;
    for (std::size_t i = 0; i < 6; ++i) collapsed(i, 0) = 1.0;
    CHECK(contrastive_loss(collapsed, build_groups(t23, plain()), plain()).value ==
          doctest::Approx(6 * std::log(3.0)).epsilon(1e-14));

    auto pivot = plain();
    pivot.anchor_mode = AnchorMode::pivot_only;
    CHECK(contrastive_loss(two_by_two(), build_groups(t22, pivot), pivot).value ==
          doctest::Approx(2 * (std::log(2.0) - 1)).epsilon(1e-14));
}

TEST_CASE("collapse is not optimal") {
    const auto t = tags_grid(2, {"en", "fr", "de"});
    const auto g = build_groups(t, plain());
    Matrix collapsed(6, 2), split(6, 2);
    for (std::size_t i = 0; i < 6; ++i) {
        collapsed(i, 0) = 1.0;
        split(i, i < 3 ? 0 : 1) = 1.0;
    }
    CHECK(contrastive_loss(collapsed, g, plain()).value > contrastive_loss(split, g, plain()).value);
}

TEST_CASE("loss matches the scalar oracle") {
    Rng rng(2);
    for (int trial = 0; trial < 60; ++trial) {
        AlignmentConfig cfg;
        cfg.tau = std::vector<double>{0.05, 0.1, 0.5, 1.0}[rng.index(4)];
        cfg.normalize_for_logits = rng.index(2) == 0;
        cfg.boost = rng.index(2) == 0;
        cfg.denominator = rng.index(2) == 0 ? Denominator::as_written : Denominator::include_positives;
        cfg.anchor_mode = rng.index(3) == 0 ? AnchorMode::pivot_only : AnchorMode::all_languages;
        const auto tags = tags_grid(2 + rng.index(3), {"en", "fr", "de"});
        const Matrix z = random_matrix(tags.size(), 2 + rng.index(5), rng, cfg.normalize_for_logits ? 1.0 : 0.3);
        const auto g = build_groups(tags, cfg);
        oracle::LossOptions o{cfg.tau, cfg.normalize_for_logits, cfg.boost,
                              cfg.denominator == Denominator::include_positives,
                              cfg.anchor_mode == AnchorMode::pivot_only, "en"};
        CHECK(contrastive_loss(z, g, cfg).value == doctest::Approx(oracle::contrastive(to_oracle(tags, z), o)).epsilon(1e-10));
    }
}

TEST_CASE("regularizer values") {
    Rng rng(3);
    const Matrix z0 = random_matrix(4, 3, rng);
    const auto same = regularizer(z0, z0);
    CHECK(same.value == 0.0);
    for (double v : same.grad.flat()) CHECK(v == 0.0);

    Matrix shifted = z0;
    for (std::size_t i = 0; i < 4; ++i) shifted(i, i % 3) += 1.0;
    CHECK(regularizer(shifted, z0).value == doctest::Approx(1.0).epsilon(1e-14));

    const Matrix z = random_matrix(5, 3, rng), zo = random_matrix(5, 3, rng);
    std::vector<oracle::Vec> a, b;
    for (std::size_t i = 0; i < 5; ++i) {
        a.emplace_back(z.row(i).begin(), z.row(i).end());
        b.emplace_back(zo.row(i).begin(), zo.row(i).end());
    }
    CHECK(std::abs(regularizer(z, zo).value - oracle::regularizer(a, b)) <= 1e-12);

    // Translation invariance.
    Matrix z2 = z, zo2 = zo;
    for (std::size_t i = 0; i < 5; ++i)
        for (std::size_t k = 0; k < 3; ++k) z2(i, k) += 0.7 * (k + 1), zo2(i, k) += 0.7 * (k + 1);
    CHECK(std::abs(regularizer(z2, zo2).value - regularizer(z, zo).value) <= 1e-12);
    CHECK_THROWS(regularizer(z, random_matrix(4, 3, rng)));
}

TEST_CASE("total objective is additive") {
    const auto t = tags_grid(2, {"en", "fr"});
    auto cfg = plain();
    const auto g = build_groups(t, cfg);
    const Matrix z = two_by_two();
    Matrix zo = z;
    for (std::size_t i = 0; i < 4; ++i) zo(i, 0) += (i % 2 == 0 ? 1.0 : -1.0);  // unit distance each

    cfg.lambda = 0.0;
    const auto l0 = total_objective(z, zo, g, cfg);
    CHECK(l0.total == l0.contrastive);

    cfg.lambda = 1.0;
    const auto l1 = total_objective(z, zo, g, cfg);
    CHECK(l1.regularizer == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(l1.total - (l1.contrastive + 1.0)) <= 1e-12);
    CHECK(l1.anchors_used == 4);

    cfg.lambda = 1e6;
    const auto at_init = total_objective(z, z, g, cfg);
    CHECK(at_init.total == at_init.contrastive);
}

TEST_CASE("gradient checks") {
    Rng rng(4);
    const auto tags = tags_grid(2, {"en", "fr"});
    const Matrix z = random_matrix(4, 4, rng);
    const Matrix zo = random_matrix(4, 4, rng);
    AlignmentConfig cfg;
    cfg.tau = 0.5;
    cfg.lambda = 0.3;
    cfg.normalize_for_logits = false;
    const auto g = build_groups(tags, cfg);
    CHECK(finite_difference_check(z, zo, g, cfg) <= 1e-5);
    cfg.normalize_for_logits = true;
    CHECK(finite_difference_check(z, zo, g, cfg) <= 1e-5);
    cfg.boost = true;
    CHECK(finite_difference_check(z, zo, g, cfg) <= 1e-5);
}

TEST_CASE("permutation invariance") {
    Rng rng(5);
    const auto tags = tags_grid(3, {"en", "fr", "de"});
    const Matrix z = random_matrix(9, 4, rng);
    const Matrix zo = random_matrix(9, 4, rng);
    AlignmentConfig cfg;
    const auto base = total_objective(z, zo, build_groups(tags, cfg), cfg);

    std::vector<std::size_t> perm(9);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span(perm));
    std::vector<SentenceTag> ptags(9);
    Matrix pz(9, 4), pzo(9, 4);
    for (std::size_t i = 0; i < 9; ++i) {
        ptags[i] = tags[perm[i]];
        std::copy(z.row(perm[i]).begin(), z.row(perm[i]).end(), pz.row(i).begin());
        std::copy(zo.row(perm[i]).begin(), zo.row(perm[i]).end(), pzo.row(i).begin());
    }
    const auto shuffled = total_objective(pz, pzo, build_groups(ptags, cfg), cfg);
    CHECK(std::abs(base.total - shuffled.total) <= 1e-10);
    for (std::size_t i = 0; i < 9; ++i)
        for (std::size_t k = 0; k < 4; ++k) CHECK(std::abs(shuffled.grad_z(i, k) - base.grad_z(perm[i], k)) <= 1e-10);
}

TEST_CASE("language relabeling and anchor decomposition") {
    Rng rng(6);
    const std::vector<std::string> langs{"en", "fr", "de"};
    const auto tags = tags_grid(3, langs);
    const Matrix z = random_matrix(9, 3, rng);
    AlignmentConfig cfg;
    const double all = contrastive_loss(z, build_groups(tags, cfg), cfg).value;

    auto renamed = tags;
    for (auto& t : renamed) t.language = t.language == "en" ? "xx" : t.language == "fr" ? "yy" : "zz";
    CHECK(std::abs(contrastive_loss(z, build_groups(renamed, cfg), cfg).value - all) <= 1e-12);

    double sum = 0.0;
    for (const auto& l : langs) {
        AlignmentConfig p = cfg;
        p.anchor_mode = AnchorMode::pivot_only;
        p.pivot = l;
        sum += contrastive_loss(z, build_groups(tags, p), p).value;
    }
    CHECK(std::abs(sum - all) <= 1e-10);
}

TEST_CASE("extreme logits stay finite") {
    const auto tags = tags_grid(2, {"en", "fr"});
    auto cfg = plain(1.0);
    const auto g = build_groups(tags, cfg);
    Matrix z = Matrix::from_rows({{100, 0}, {100, 0}, {-100, 0}, {0, 100}});
    const auto l = contrastive_loss(z, g, cfg);
    CHECK(std::isfinite(l.value));
    for (double v : l.grad.flat()) CHECK(std::isfinite(v));

    Matrix nan_z = z;
    nan_z(0, 0) = std::nan("");
    CHECK_THROWS(contrastive_loss(nan_z, g, cfg));
}

TEST_CASE("singleton instances contribute nothing") {
    // Instance 2 has one sentence: no positives, no term.
    const std::vector<SentenceTag> tags{{0, "en"}, {0, "fr"}, {1, "en"}, {1, "fr"}, {2, "en"}};
    auto cfg = plain();
    Rng rng(7);
    const Matrix z = random_matrix(5, 3, rng);
    const auto g = build_groups(tags, cfg);
    CHECK(g.positives[4].empty());
    const auto value = contrastive_loss(z, g, cfg).value;
    oracle::LossOptions o{1.0, false};
    CHECK(value == doctest::Approx(oracle::contrastive(to_oracle(tags, z), o)).epsilon(1e-12));
}

TEST_CASE("config validation") {
    AlignmentConfig cfg;
    cfg.tau = 0.0;
    CHECK_THROWS(cfg.validate());
    cfg.tau = 0.1;
    cfg.lambda = -1.0;
    CHECK_THROWS(cfg.validate());
    CHECK(anchor_mode_from_string(to_string(AnchorMode::pivot_only)) == AnchorMode::pivot_only);
    CHECK(denominator_from_string(to_string(Denominator::include_positives)) == Denominator::include_positives);
    CHECK_THROWS(denominator_from_string("other"));
}
