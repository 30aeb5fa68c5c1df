#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>

#include "mta/baselines.hpp"

using namespace mta;

namespace {

TouchpointPath make_path(std::string id, std::vector<std::uint32_t> events,
                         std::vector<double> times, double end_time, bool converted) {
    TouchpointPath p;
    p.id = std::move(id);
    p.events = std::move(events);
    p.occurrence_times = std::move(times);
    p.end_time = end_time;
    for (double t : p.occurrence_times) p.time_lags.push_back(end_time - t);
    p.converted = converted;
    return p;
}

} // namespace

TEST_CASE("lta applies laplace smoothing to last-touch rates") {
    const Vocabulary vocab = Vocabulary::standard();
    const std::uint32_t ec = vocab.index_of("EC");
    std::vector<TouchpointPath> train;
    for (int i = 0; i < 100; ++i)
        train.push_back(make_path("p" + std::to_string(i), {ec}, {0.0}, 1.0, i < 80));
    LtaModel m = LtaModel::fit(train, vocab);
    CHECK(m.predict(make_path("q", {ec}, {0.0}, 1.0, false)) ==
          Catch::Approx(81.0 / 102.0).epsilon(1e-12));
}

TEST_CASE("lta sees only the final touchpoint") {
    const Vocabulary vocab = Vocabulary::standard();
    std::vector<TouchpointPath> train;
    for (int i = 0; i < 40; ++i)
        train.push_back(make_path("p" + std::to_string(i),
                                  {static_cast<std::uint32_t>(i % 6)}, {0.0}, 1.0, i % 3 == 0));
    LtaModel m = LtaModel::fit(train, vocab);
    auto a = make_path("a", {0, 1, 2, 5}, {0, 1, 2, 3}, 4, false);
    auto b = make_path("b", {3, 3, 3, 5}, {0, 1, 2, 3}, 4, false);
    CHECK(m.predict(a) == m.predict(b));
}

TEST_CASE("lta yields the smoothed prior for unseen touchpoints") {
    const Vocabulary vocab = Vocabulary::standard();
    std::vector<TouchpointPath> train = {make_path("p", {0}, {0.0}, 1.0, true)};
    LtaModel m = LtaModel::fit(train, vocab);
    CHECK(m.predict(make_path("q", {5}, {0.0}, 1.0, false)) == 0.5);
}

TEST_CASE("lta round-trips through its model file") {
    const Vocabulary vocab = Vocabulary::standard();
    std::vector<TouchpointPath> train;
    for (int i = 0; i < 20; ++i)
        train.push_back(make_path("p" + std::to_string(i),
                                  {static_cast<std::uint32_t>(i % 6)}, {0.0}, 1.0, i % 2 == 0));
    LtaModel m = LtaModel::fit(train, vocab);
    save_lta("lta_rt.json", m);
    LtaModel loaded = load_lta("lta_rt.json");
    std::remove("lta_rt.json");
    CHECK(loaded.rates == m.rates);
    CHECK(loaded.vocab == m.vocab);
}

TEST_CASE("featurizer places a single event in its lag bucket") {
    const Vocabulary vocab = Vocabulary::standard();
    LrFeatureSpec spec;
    const std::uint32_t ps = vocab.index_of("PS");
    Tensor f = lr_featurize(make_path("p", {ps}, {0.0}, 3.2, false), spec);
    REQUIRE(f.numel() == 342);
    CHECK(f[std::size_t(ps) * 57 + 3] == 1.0);
    double sum = 0.0;
    for (std::size_t i = 0; i < f.numel(); ++i) sum += f[i];
    CHECK(sum == 1.0);
}

TEST_CASE("feature dimension is horizon times vocabulary") {
    LrFeatureSpec spec;
    CHECK(spec.dim() == 342);
    LrFeatureSpec other;
    other.horizon_days = 10;
    other.vocab_size = 4;
    CHECK(lr_featurize(make_path("p", {1}, {0.0}, 1.0, false), other).numel() == 40);
}

TEST_CASE("feature sum counts the events") {
    LrFeatureSpec spec;
    auto p = make_path("p", {0, 0, 3, 5, 5}, {0, 0.1, 1, 2, 2.5}, 3, true);
    Tensor f = lr_featurize(p, spec);
    double sum = 0.0;
    for (std::size_t i = 0; i < f.numel(); ++i) sum += f[i];
    CHECK(sum == 5.0);
}

TEST_CASE("binary mode collapses repeated buckets") {
    LrFeatureSpec spec;
    spec.binary = true;
    auto p = make_path("p", {0, 0}, {0.0, 0.1}, 0.5, true); // lags 0.5 and 0.4: bucket 0 twice
    Tensor f = lr_featurize(p, spec);
    double sum = 0.0;
    for (std::size_t i = 0; i < f.numel(); ++i) sum += f[i];
    CHECK(sum == 1.0);
}

TEST_CASE("lags beyond the horizon clip to the last bucket") {
    LrFeatureSpec spec;
    Tensor f = lr_featurize(make_path("p", {2}, {0.0}, 80.0, false), spec);
    CHECK(f[2 * 57 + 56] == 1.0);
}

TEST_CASE("features ignore event order inside a bucket") {
    LrFeatureSpec spec;
    // both events inside bucket 0 in either order
    auto a = make_path("a", {1, 4}, {0.0, 0.3}, 0.6, false);
    auto b = make_path("b", {4, 1}, {0.0, 0.3}, 0.6, false);
    CHECK(lr_featurize(a, spec).data() == lr_featurize(b, spec).data());
}

TEST_CASE("lr separates a separable toy set") {
    const Vocabulary vocab = Vocabulary::standard();
    std::vector<TouchpointPath> train, valid;
    for (int i = 0; i < 40; ++i) {
        // converters: PS today; non-converters: EO six weeks back
        train.push_back(make_path("p" + std::to_string(i), {5}, {0.0}, 0.5, true));
        train.push_back(make_path("n" + std::to_string(i), {3}, {0.0}, 44.0, false));
    }
    for (int i = 0; i < 10; ++i) {
        valid.push_back(make_path("vp" + std::to_string(i), {5}, {0.0}, 0.5, true));
        valid.push_back(make_path("vn" + std::to_string(i), {3}, {0.0}, 44.0, false));
    }
    LrFeatureSpec spec;
    LrTrainConfig cfg;
    cfg.seed = 3;
    LrModel m = lr_train(train, valid, vocab, spec, cfg);
    EvalResult r = evaluate_with([&](const TouchpointPath& p) { return m.predict(p); }, train);
    CHECK(r.accuracy == 1.0);
    CHECK(r.auc_value == 1.0);
}

TEST_CASE("stronger l2 shrinks the weight norm") {
    const Vocabulary vocab = Vocabulary::standard();
    Rng rng(7);
    std::vector<TouchpointPath> train, valid;
    for (int i = 0; i < 120; ++i) {
        const std::uint32_t ev = static_cast<std::uint32_t>(rng.index(6));
        const double t = rng.uniform(0.0, 20.0);
        const bool label = rng.bernoulli(ev < 3 ? 0.7 : 0.3);
        auto p = make_path("p" + std::to_string(i), {ev}, {0.0}, t, label);
        (i % 6 ? train : valid).push_back(p);
    }
    auto norm_at = [&](double l2) {
        LrTrainConfig cfg;
        cfg.l2 = l2;
        cfg.max_epochs = 80;
        cfg.patience = 80; // run the full budget so l2 is the only difference
        cfg.seed = 11;
        LrModel m = lr_train(train, valid, vocab, LrFeatureSpec{}, cfg);
        double s = 0.0;
        for (std::size_t i = 0; i < m.w.numel(); ++i) s += m.w[i] * m.w[i];
        return std::sqrt(s);
    };
    const double n1 = norm_at(1e-4), n2 = norm_at(1e-2), n3 = norm_at(1.0);
    CHECK(n1 > n2);
    CHECK(n2 > n3);
}

TEST_CASE("lr training is deterministic per seed") {
    const Vocabulary vocab = Vocabulary::standard();
    Rng rng(9);
    std::vector<TouchpointPath> train, valid;
    for (int i = 0; i < 60; ++i) {
        auto p = make_path("p" + std::to_string(i),
                           {static_cast<std::uint32_t>(rng.index(6))}, {0.0},
                           rng.uniform(0.5, 30.0), rng.bernoulli(0.5));
        (i % 5 ? train : valid).push_back(p);
    }
    LrTrainConfig cfg;
    cfg.seed = 21;
    LrModel a = lr_train(train, valid, vocab, LrFeatureSpec{}, cfg);
    LrModel b = lr_train(train, valid, vocab, LrFeatureSpec{}, cfg);
    CHECK(a.w.data() == b.w.data());
    CHECK(a.b.data() == b.b.data());
}

TEST_CASE("lr round-trips through its model file") {
    const Vocabulary vocab = Vocabulary::standard();
    LrModel m;
    m.spec = LrFeatureSpec{};
    m.vocab = vocab;
    m.w = Tensor({m.spec.dim()});
    Rng rng(13);
    for (std::size_t i = 0; i < m.w.numel(); ++i) m.w[i] = rng.uniform(-1, 1);
    m.b = Tensor::scalar(-0.3);
    save_lr("lr_rt.json", m);
    LrModel loaded = load_lr("lr_rt.json");
    std::remove("lr_rt.json");
    CHECK(loaded.w.data() == m.w.data());
    CHECK(loaded.b.data() == m.b.data());
    CHECK(loaded.spec.horizon_days == 57);

    // wrong-variant guard
    save_lr("lr_rt.json", m);
    CHECK_THROWS_AS(load_lta("lr_rt.json"), ModelIoError);
    std::remove("lr_rt.json");
}
