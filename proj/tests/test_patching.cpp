#include "geopatch/patching.hpp"
#include "support/fixtures.hpp"
#include "support/oracle.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace geopatch;
using fixtures::kind_of;

namespace {

ProbDist dist(std::vector<float> p) { return ProbDist(std::move(p)); }

std::vector<PromptPair> toy_pairs(std::size_t n_phrases) {
    const auto& t = fixtures::toy();
    const auto phrases = fixtures::first_phrases(n_phrases);
    return build_pairs(t.placenames, phrases, t.assets.vocab);
}

PromptPair control_pair(const std::string& name) {
    const auto& vocab = fixtures::toy().assets.vocab;
    return make_prompt_pair(name, distance_phrases()[0], clean_prompt(name), clean_prompt(name), vocab);
}

} // namespace

TEST(SlidingWindows, Enumeration) {
    const auto w = sliding_windows(8, 5);
    ASSERT_EQ(w.size(), 4u);
    for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(w[i], (LayerWindow{i, i + 4}));
    EXPECT_EQ(sliding_windows(5, 5), std::vector<LayerWindow>{(LayerWindow{0, 4})});
    EXPECT_EQ(sliding_windows(26, 5).size(), 22u);
    EXPECT_EQ(kind_of([] { sliding_windows(4, 5); }), ErrorKind::WindowTooWide);
    EXPECT_EQ(kind_of([] { sliding_windows(4, 0); }), ErrorKind::WindowTooWide);
}

TEST(SlidingWindows, Invariants) {
    for (std::size_t n = 1; n <= 30; ++n) {
        for (std::size_t w = 1; w <= n; ++w) {
            const auto ws = sliding_windows(n, w);
            EXPECT_EQ(ws.size(), n - w + 1);
            for (const auto& x : ws) {
                EXPECT_LT(x.end, n);
                EXPECT_EQ(x.width(), w);
            }
        }
    }
}

TEST(EffectMetric, WorkedExample) {
    const auto s = effect_metric(dist({0.7f, 0.3f}), dist({0.3f, 0.7f}), dist({0.5f, 0.5f}));
    EXPECT_NEAR(s.kl_corrupted, 0.3389, 1e-4);
    EXPECT_NEAR(s.kl_patched, 0.0872, 1e-4);
    EXPECT_NEAR(s.effect, 0.2517, 1e-4);
    const double exact = 0.4 * std::log(7.0 / 3.0) - (0.5 * std::log(0.5 / 0.7) + 0.5 * std::log(0.5 / 0.3));
    EXPECT_NEAR(s.effect, exact, 1e-6);
}

TEST(EffectMetric, Identities) {
    const auto clean = dist({0.6f, 0.3f, 0.1f}), corrupted = dist({0.2f, 0.2f, 0.6f});
    const auto same = effect_metric(clean, corrupted, corrupted);
    EXPECT_EQ(same.effect, 0.0);
    const auto full = effect_metric(clean, corrupted, clean);
    EXPECT_EQ(full.kl_patched, 0.0);
    EXPECT_EQ(full.effect, full.kl_corrupted);
    EXPECT_GT(full.effect, 0.0);
    const auto rev = effect_metric(clean, corrupted, clean, KlOrder::clean_from_target);
    EXPECT_NEAR(rev.kl_corrupted, kl_divergence(clean, corrupted), 1e-12);
    EXPECT_NE(rev.kl_corrupted, full.kl_corrupted);
}

TEST(KlOrderNames, RoundTrip) {
    for (auto o : {KlOrder::target_from_clean, KlOrder::clean_from_target}) EXPECT_EQ(parse_kl_order(to_string(o)), o);
    EXPECT_EQ(kind_of([] { parse_kl_order("both"); }), ErrorKind::InvalidConfig);
}

TEST(RunPair, ControlPairHasZeroEffect) {
    const auto& t = fixtures::toy();
    const auto pair = control_pair(t.placenames[0]);
    EXPECT_TRUE(pair.alignment.patchable_positions.empty());
    for (std::size_t o = 0; o < pair.alignment.report_width(); ++o) {
        const auto r = run_pair(*t.model, pair, {0, t.assets.config.n_layers - 1}, HookSite::mlp_out, o);
        EXPECT_EQ(r.kl_corrupted, 0.0);
        EXPECT_LE(std::abs(r.effect), 1e-5);
    }
}

TEST(RunPair, PrefixOffsetIsNoOp) {
    const auto& t = fixtures::toy();
    for (const auto& pair : toy_pairs(20)) {
        const auto r = run_pair(*t.model, pair, {0, 1}, HookSite::mlp_out, 0);
        EXPECT_LE(std::abs(r.effect), 1e-5) << pair.placename << " / " << pair.distance.text;
    }
}

TEST(RunPair, MatchesOracle) {
    const auto cfg = oracle::small_config(2, 16, 4, 0);
    const auto& t = fixtures::toy();
    auto c = cfg;
    c.vocab_size = t.assets.vocab.size();
    c.max_seq = 32;
    const auto params = oracle::random_params(c, 31);
    const Model model(c, params);
    const auto pairs = toy_pairs(3);
    for (const auto& pair : pairs) {
        const std::size_t offset = 1;
        const auto r = run_pair(model, pair, {0, 1}, HookSite::mlp_out, offset);
        const std::size_t pos = pair.alignment.position_of_offset(offset);
        const auto clean = oracle::run(c, params, pair.clean_tokens.ids);
        const auto corrupted = oracle::run(c, params, pair.corrupted_tokens.ids);
        std::vector<oracle::Substitution> subs;
        for (int l = 0; l < 2; ++l) {
            const auto row = clean.acts.at({l, HookSite::mlp_out}).row(pos);
            subs.push_back({l, HookSite::mlp_out, pos, {row.begin(), row.end()}});
        }
        const auto patched = oracle::run(c, params, pair.corrupted_tokens.ids, subs);
        const auto pc = oracle::last_row_probs(clean.logits), pk = oracle::last_row_probs(corrupted.logits),
                   pp = oracle::last_row_probs(patched.logits);
        EXPECT_NEAR(r.kl_corrupted, oracle::kl(pk, pc), 1e-5);
        EXPECT_NEAR(r.kl_patched, oracle::kl(pp, pc), 1e-5);
        EXPECT_NEAR(r.effect, oracle::kl(pk, pc) - oracle::kl(pp, pc), 1e-5);
        EXPECT_EQ(r.offset, offset);
        EXPECT_EQ(r.placename, pair.placename);
    }
}

TEST(RunPair, OffsetOutOfRange) {
    const auto& t = fixtures::toy();
    const auto pair = toy_pairs(1).front();
    EXPECT_EQ(kind_of([&] { run_pair(*t.model, pair, {0, 1}, HookSite::mlp_out, pair.alignment.report_width()); }),
              ErrorKind::SourceUnavailable);
}

TEST(Plan, PassCounts) {
    const auto pair = toy_pairs(1).front();
    const auto w26 = sliding_windows(26, 5);
    EXPECT_EQ(cache_reuse_plan(pair, w26, {0, 1, 2, 3, 4}).forward_passes(), 112u);
    EXPECT_EQ(cache_reuse_plan(pair, {{0, 1}}, {2}).forward_passes(), 3u);
    EXPECT_EQ(kind_of([&] { cache_reuse_plan(pair, {}, {0}); }), ErrorKind::InvalidPlan);
    EXPECT_EQ(kind_of([&] { cache_reuse_plan(pair, {{0, 1}}, {}); }), ErrorKind::InvalidPlan);
    EXPECT_EQ(kind_of([&] { cache_reuse_plan(pair, {{0, 1}}, {9}); }), ErrorKind::SourceUnavailable);
}

TEST(Plan, InstrumentedPassCount) {
    const auto& t = fixtures::toy();
    auto& model = const_cast<Model&>(*t.model);
    const auto pair = toy_pairs(1).front();
    model.reset_forward_count();
    execute_plan(model, pair, cache_reuse_plan(pair, {{1, 2}}, {3}), HookSite::mlp_out);
    EXPECT_EQ(model.forward_count(), 3u);
    model.reset_forward_count();
    const auto plan = cache_reuse_plan(pair, sliding_windows(4, 2), {0, 1, 2, 3, 4});
    execute_plan(model, pair, plan, HookSite::mlp_out);
    EXPECT_EQ(model.forward_count(), plan.forward_passes());
    EXPECT_EQ(model.forward_count(), 17u);
}

TEST(PlanProperty, BatchedMatchesNaive) {
    const auto& t = fixtures::toy();
    const auto windows = sliding_windows(4, 2);
    for (const auto site : {HookSite::mlp_out, HookSite::attn_out, HookSite::resid_pre, HookSite::resid_post}) {
        for (const auto& pair : toy_pairs(4)) {
            const std::vector<std::size_t> offsets{0, 1, 2, 3, 4};
            const auto batched = execute_plan(*t.model, pair, cache_reuse_plan(pair, windows, offsets), site);
            ASSERT_EQ(batched.size(), offsets.size() * windows.size());
            std::size_t i = 0;
            for (auto o : offsets) {
                for (const auto& w : windows) {
                    const auto naive = run_pair(*t.model, pair, w, site, o);
                    const auto& b = batched[i++];
                    EXPECT_EQ(b.offset, o);
                    EXPECT_EQ(b.window, w);
                    EXPECT_LE(std::abs(b.effect - naive.effect), 1e-6);
                    EXPECT_LE(std::abs(b.kl_patched - naive.kl_patched), 1e-6);
                    EXPECT_GE(b.kl_corrupted, 0.0);
                    EXPECT_GE(b.kl_patched, 0.0);
                    EXPECT_LE(b.effect, b.kl_corrupted);
                }
            }
        }
    }
}

TEST(PlanProperty, AllLayersAllOffsetsOnControlIsZero) {
    const auto& t = fixtures::toy();
    for (const auto& name : t.placenames) {
        const auto pair = control_pair(name);
        const auto recs = execute_plan(*t.model, pair,
                                       cache_reuse_plan(pair, sliding_windows(4, 4), {0, 1, 2, 3, 4}), HookSite::mlp_out);
        for (const auto& r : recs) EXPECT_LE(std::abs(r.effect), 1e-5);
    }
}
