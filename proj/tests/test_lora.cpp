#include <doctest.h>

#include <cmath>

#include "debias/lora.hpp"
#include "debias/random.hpp"
#include "lora_oracle.hpp"
#include "support.hpp"

using namespace debias;

using oracle::loop_loss;
using oracle::max_rel_error;
using oracle::random_matrix;
using oracle::random_net;

TEST_SUITE("lora") {

TEST_CASE("zero-init adapters leave forward bit-identical") {
    const auto base = DenseNet::random({9, 32, 32, 2}, 1);
    const auto adapted = attach_lora(base, 4, 7);
    NormalRng rng(2);
    for (int i = 0; i < 100; ++i) {
        const Eigen::VectorXd x = random_matrix(rng, 9, 1, 2.0).col(0);
        const Eigen::VectorXd a = forward(adapted, x);
        const Eigen::VectorXd b = forward(base, x);
        CHECK((a.array() == b.array()).all());
    }
    for (const auto& ad : adapted.adapters()) CHECK(ad.b.isZero(0.0));
}

TEST_CASE("hand-computed single linear layer") {
    DenseNet base({{Eigen::Matrix2d::Identity(), Eigen::Vector2d::Zero(), Activation::Identity}});
    LoraAdapter ad;
    ad.a = (Eigen::MatrixXd(1, 2) << 1, 0).finished();
    ad.b = (Eigen::MatrixXd(2, 1) << 0, 1).finished();
    ad.alpha = 1.0;
    const AdaptedNet net(base, {ad});
    const Eigen::VectorXd h = forward(net, Eigen::Vector2d(3, 4));
    CHECK(h(0) == 3.0);
    CHECK(h(1) == 7.0);
}

TEST_CASE("zero input and zero bias give zero output") {
    auto net = DenseNet::random({3, 5, 2}, 4);
    const auto out = forward(attach_lora(net, 2, 5), Eigen::VectorXd::Zero(3));
    CHECK(out.isZero(0.0));
}

TEST_CASE("shape errors") {
    const auto net = DenseNet::random({3, 5, 2}, 4);
    CHECK_THROWS_AS(forward(net, Eigen::VectorXd::Zero(4)), ShapeError);
    std::vector<DenseLayer> bad{{Eigen::MatrixXd::Zero(4, 3), Eigen::VectorXd::Zero(4), Activation::Tanh},
                                {Eigen::MatrixXd::Zero(2, 5), Eigen::VectorXd::Zero(2), Activation::Identity}};
    CHECK_THROWS_AS(DenseNet{bad}, ShapeError);
    std::vector<DenseLayer> tanh_head{{Eigen::MatrixXd::Zero(2, 3), Eigen::VectorXd::Zero(2), Activation::Tanh}};
    CHECK_THROWS_AS(DenseNet{tanh_head}, ShapeError);
}

TEST_CASE("attach rules: counting, determinism, rank bound") {
    DenseNet square({{Eigen::MatrixXd::Zero(32, 32), Eigen::VectorXd::Zero(32), Activation::Identity}});
    const auto a = attach_lora(square, 4, 9);
    CHECK(a.trainable_parameters() == 256);
    CHECK(square.weight_count() == 1024);
    CHECK(a.trainable_fraction() == doctest::Approx(0.25));

    const auto base = DenseNet::random({9, 32, 32, 2}, 3);
    CHECK(attach_lora(base, 4, 5).adapters()[0].a == attach_lora(base, 4, 5).adapters()[0].a);
    CHECK(attach_lora(base, 4, 5).adapters()[0].a != attach_lora(base, 4, 6).adapters()[0].a);
    CHECK_THROWS_AS(attach_lora(base, 9, 5), ConfigError);
    CHECK_THROWS_AS(attach_lora(base, 0, 5), ConfigError);
    // The two-output head keeps the requested scale with a capped rank.
    const auto capped = attach_lora(base, 4, 5);
    CHECK(capped.adapters().back().rank() == 2);
    CHECK(capped.adapters().back().scale() == doctest::Approx(1.0));

    // A ~ N(0, 1/rank)
    const auto wide = attach_lora(DenseNet::random({400, 400, 1}, 1), 4, 12);
    const auto& A = wide.adapters()[0].a;
    const double var = A.array().square().mean();
    CHECK(var == doctest::Approx(0.25).epsilon(0.05));
}

TEST_CASE("merge: fresh adapters return W0 exactly; trained adapters match to 1e-10") {
    NormalRng rng(21);
    const auto base = DenseNet::random({9, 32, 32, 2}, 8);
    const auto fresh = merge_lora(attach_lora(base, 4, 1));
    for (std::size_t l = 0; l < base.layers().size(); ++l) CHECK(fresh.layers()[l].weight == base.layers()[l].weight);

    auto adapted = attach_lora(base, 4, 2.0, 1);
    for (auto& ad : adapted.mutable_adapters()) ad.b = random_matrix(rng, ad.b.rows(), ad.b.cols(), 0.5);
    const auto merged = merge_lora(adapted);
    for (int i = 0; i < 1000; ++i) {
        const Eigen::VectorXd x = random_matrix(rng, 9, 1).col(0);
        const Eigen::VectorXd fa = forward(adapted, x);
        const Eigen::VectorXd fm = forward(merged, x);
        for (Eigen::Index k = 0; k < fa.size(); ++k) CHECK(std::abs(fm(k) - fa(k)) <= 1e-10 * (1.0 + std::abs(fa(k))));
    }
    // Re-attaching to the merged net is again an identity at init.
    const auto again = attach_lora(merged, 4, 3);
    const Eigen::VectorXd x = random_matrix(rng, 9, 1).col(0);
    CHECK((forward(again, x).array() == forward(merged, x).array()).all());
}

TEST_CASE("adapter gradients match central differences on 20 random nets") {
    NormalRng rng(77);
    const double eps = 1e-5;
    double worst = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const int k = 2 + static_cast<int>(rng.index(4));
        const int h1 = 3 + static_cast<int>(rng.index(4));
        const int m = 1 + static_cast<int>(rng.index(2));
        const std::vector<int> widths = trial % 2 ? std::vector<int>{k + 2, h1, m} : std::vector<int>{k + 2, h1, h1 + 1, m};
        const auto base = random_net(widths, rng);
        auto adapted = attach_lora(base, 1 + static_cast<int>(rng.index(2)), 1.5, static_cast<std::uint64_t>(trial));
        for (auto& ad : adapted.mutable_adapters()) ad.b = random_matrix(rng, ad.b.rows(), ad.b.cols(), 0.5);
        const Eigen::Index n = 5;
        Samples batch{random_matrix(rng, widths.front(), n), random_matrix(rng, m, n)};

        const auto g = grad(adapted, batch);
        CHECK(g.loss == doctest::Approx(loop_loss(base, adapted.adapters(), batch)).epsilon(1e-12));
        for (std::size_t l = 0; l < adapted.adapters().size(); ++l) {
            for (int which = 0; which < 2; ++which) {
                auto& target = which == 0 ? adapted.mutable_adapters()[l].a : adapted.mutable_adapters()[l].b;
                Eigen::MatrixXd numeric(target.rows(), target.cols());
                for (Eigen::Index i = 0; i < target.size(); ++i) {
                    const double keep = target.data()[i];
                    target.data()[i] = keep + eps;
                    const double up = loop_loss(base, adapted.adapters(), batch);
                    target.data()[i] = keep - eps;
                    const double down = loop_loss(base, adapted.adapters(), batch);
                    target.data()[i] = keep;
                    numeric.data()[i] = (up - down) / (2.0 * eps);
                }
                worst = std::max(worst, max_rel_error(which == 0 ? g.a[l] : g.b[l], numeric));
            }
        }
    }
    CHECK(worst <= 1e-4);
}

TEST_CASE("gradients vanish at an exact fit and are batch-duplication invariant") {
    NormalRng rng(5);
    auto adapted = attach_lora(DenseNet::random({4, 6, 2}, 2), 2, 3);
    for (auto& ad : adapted.mutable_adapters()) ad.b = random_matrix(rng, ad.b.rows(), ad.b.cols(), 0.5);
    Samples s{random_matrix(rng, 4, 7), Eigen::MatrixXd()};
    s.targets = forward_batch(adapted, s.inputs);
    const auto g0 = grad(adapted, s);
    for (std::size_t l = 0; l < g0.a.size(); ++l) {
        CHECK(g0.a[l].cwiseAbs().maxCoeff() <= 1e-12);
        CHECK(g0.b[l].cwiseAbs().maxCoeff() <= 1e-12);
    }
    s.targets = random_matrix(rng, 2, 7);
    Samples twice{Eigen::MatrixXd(4, 14), Eigen::MatrixXd(2, 14)};
    twice.inputs << s.inputs, s.inputs;
    twice.targets << s.targets, s.targets;
    const auto g1 = grad(adapted, s);
    const auto g2 = grad(adapted, twice);
    for (std::size_t l = 0; l < g1.a.size(); ++l) {
        CHECK((g1.a[l] - g2.a[l]).cwiseAbs().maxCoeff() <= 1e-14);
        CHECK((g1.b[l] - g2.b[l]).cwiseAbs().maxCoeff() <= 1e-14);
    }
    s.inputs(0, 0) = std::nan("");
    CHECK_THROWS_AS(grad(adapted, s), DataError);
}

TEST_CASE("dense gradients match central differences") {
    NormalRng rng(8);
    auto net = random_net({3, 4, 2}, rng);
    Samples s{random_matrix(rng, 3, 6), random_matrix(rng, 2, 6)};
    const auto g = grad(net, s);
    const double eps = 1e-6;
    double worst = 0.0;
    for (std::size_t l = 0; l < net.layers().size(); ++l) {
        auto& w = net.mutable_layers()[l].weight;
        Eigen::MatrixXd numeric(w.rows(), w.cols());
        for (Eigen::Index i = 0; i < w.size(); ++i) {
            const double keep = w.data()[i];
            w.data()[i] = keep + eps;
            const double up = mse(net, s);
            w.data()[i] = keep - eps;
            const double down = mse(net, s);
            w.data()[i] = keep;
            numeric.data()[i] = (up - down) / (2 * eps);
        }
        worst = std::max(worst, max_rel_error(g.weight[l], numeric));
    }
    CHECK(worst <= 1e-4);
}

namespace {

// y = (x0 - x1, x0 * 0.5) plus noise-free targets: learnable.
Samples toy(std::uint64_t seed, Eigen::Index n) {
    NormalRng rng(seed);
    Samples s{random_matrix(rng, 3, n), Eigen::MatrixXd(2, n)};
    s.targets.row(0) = s.inputs.row(0) - s.inputs.row(1);
    s.targets.row(1) = 0.5 * s.inputs.row(0);
    return s;
}

}  // namespace

TEST_CASE("SFT improves validation loss and never touches the base") {
    const auto base = DenseNet::random({3, 8, 2}, 4);
    const auto before = base.checksum();
    TrainConfig cfg;
    cfg.learning_rate = 0.05;
    cfg.batch_size = 16;
    cfg.max_epochs = 30;
    cfg.eval_every = 20;
    cfg.patience = 5;
    cfg.momentum = 0.9;
    const auto result = train_sft(attach_lora(base, 2, 1), toy(1, 256), toy(2, 64), cfg);
    CHECK(result.net.base().checksum() == before);
    CHECK(base.checksum() == before);
    CHECK(result.report.best_val_loss() < result.report.initial_val_loss());
    CHECK(mse(result.net, toy(2, 64)) == doctest::Approx(result.report.best_val_loss()).epsilon(1e-12));

    // best_step attains the minimum, and at most `patience` evals follow it
    const auto& ev = result.report.evals;
    long evals_after = 0;
    for (const auto& e : ev) {
        CHECK(e.val_loss >= result.report.best_val_loss());
        if (e.step > result.report.best_step) ++evals_after;
    }
    CHECK(evals_after <= cfg.patience);
}

TEST_CASE("same seed, same report") {
    const auto base = DenseNet::random({3, 8, 2}, 4);
    TrainConfig cfg;
    cfg.eval_every = 10;
    cfg.max_epochs = 3;
    cfg.seed = 42;
    cfg.optimizer = Optimizer::Adam;
    cfg.learning_rate = 1e-2;
    const auto a = train_sft(attach_lora(base, 2, 1), toy(1, 128), toy(2, 32), cfg);
    const auto b = train_sft(attach_lora(base, 2, 1), toy(1, 128), toy(2, 32), cfg);
    CHECK(a.report == b.report);
}

TEST_CASE("patience 1 with a frozen learner stops at the first non-improving eval") {
    NormalRng rng(3);
    Samples noise{random_matrix(rng, 3, 64), random_matrix(rng, 2, 64)};
    TrainConfig cfg;
    cfg.learning_rate = 0.0;
    cfg.patience = 1;
    cfg.eval_every = 1;
    const auto r = train_sft(attach_lora(DenseNet::random({3, 8, 2}, 4), 2, 1), noise, noise, cfg);
    CHECK(r.report.best_step == 0);
    CHECK(r.report.stopped_early);
    CHECK(r.report.evals.size() == 2);
}

TEST_CASE("empty data and divergence") {
    const auto adapted = attach_lora(DenseNet::random({3, 8, 2}, 4), 2, 1);
    Samples empty{Eigen::MatrixXd(3, 0), Eigen::MatrixXd(2, 0)};
    CHECK_THROWS_AS(train_sft(adapted, empty, toy(2, 8), TrainConfig{}), DataError);

    TrainConfig hot;
    hot.learning_rate = 1e200;
    hot.eval_every = 1;
    hot.max_epochs = 2;
    try {
        auto net = adapted;
        for (auto& ad : net.mutable_adapters()) ad.b.setConstant(1.0);
        train_sft(net, toy(1, 64), toy(2, 16), hot);
        FAIL("expected divergence");
    } catch (const DivergenceError& e) {
        CHECK(!e.report().evals.empty());
    }
}

TEST_CASE("checkpoint round-trips bit-exactly") {
    Checkpoint c;
    c.base = DenseNet::random({9, 6, 2}, 3);
    auto adapted = attach_lora(c.base, 2, 3.0, 5);
    NormalRng rng(1);
    for (auto& ad : adapted.mutable_adapters()) ad.b = random_matrix(rng, ad.b.rows(), ad.b.cols());
    c.adapters = adapted.adapters();
    c.normalizer = InputNormalizer{8, true, 0.1234567890123, 19.87, {3.3, 4.4}};
    c.config_hash = "abc123";
    const auto text = serialize_checkpoint(c);
    const auto back = deserialize_checkpoint(text);
    CHECK(serialize_checkpoint(back) == text);
    CHECK(back.base.checksum() == c.base.checksum());
    CHECK(back.adapters[1].b == c.adapters[1].b);
    CHECK(back.adapters[0].alpha == c.adapters[0].alpha);
    CHECK(back.normalizer.in_mean == c.normalizer.in_mean);
    CHECK(back.config_hash == "abc123");

    test::TempDir dir;
    save_checkpoint(c, dir.file("ckpt.txt"));
    CHECK(serialize_checkpoint(load_checkpoint(dir.file("ckpt.txt"))) == text);
    CHECK_THROWS_AS(deserialize_checkpoint(text.substr(0, text.size() / 2)), DataError);
}

TEST_CASE("normalizer round trip") {
    const InputNormalizer n{8, false, 2.0, 4.0, {3.0, 0.25}};
    const std::vector<double> v{1.2345, -9.87};
    const auto back = n.denormalize(n.normalize_target(v));
    CHECK(back[0] == doctest::Approx(v[0]).epsilon(1e-12));
    CHECK(back[1] == doctest::Approx(v[1]).epsilon(1e-12));
}

}  // TEST_SUITE
