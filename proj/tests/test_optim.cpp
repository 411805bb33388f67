#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <limits>
#include <vector>

#include "helpers.hpp"
#include "sbfd/optim.hpp"

using namespace sbfd;

namespace {

std::vector<TensorRef> refs_of(Vector& v) { return {{v.data(), v.size()}}; }

}  // namespace

TEST_CASE("one Adam step from fresh state has the hand-computed magnitude", "[optim]") {
    Vector theta = {0.0};
    Vector grad = {1.0};
    auto p = refs_of(theta);
    const auto g = refs_of(grad);
    AdamState state = AdamState::init(p);
    AdamConfig cfg;
    cfg.learning_rate = 1e-3;

    adam_step(p, g, state, cfg);
    // m_hat = 1, v_hat = 1 after bias correction, so the update is lr/(1+eps).
    const double expect = 1e-3 / (1.0 + 1e-8);
    CHECK(theta[0] == Catch::Approx(-expect).margin(1e-18));
    CHECK(state.t == 1);

    // The sign follows the gradient: positive g decreases theta.
    Vector theta2 = {5.0};
    Vector grad2 = {-2.5};
    auto p2 = refs_of(theta2);
    AdamState state2 = AdamState::init(p2);
    adam_step(p2, refs_of(grad2), state2, cfg);
    CHECK(theta2[0] > 5.0);
}

TEST_CASE("zero gradient from fresh state leaves parameters untouched", "[optim]") {
    Vector theta = {1.5, -2.0, 0.25};
    Vector grad = {0.0, 0.0, 0.0};
    auto p = refs_of(theta);
    AdamState state = AdamState::init(p);
    adam_step(p, refs_of(grad), state, AdamConfig{});
    CHECK(theta == Vector{1.5, -2.0, 0.25});
}

TEST_CASE("Adam state advances across successive calls", "[optim]") {
    Vector theta = {0.0};
    Vector grad = {1.0};
    auto p = refs_of(theta);
    const auto g = refs_of(grad);
    AdamState state = AdamState::init(p);
    AdamConfig cfg;
    cfg.learning_rate = 1e-3;

    adam_step(p, g, state, cfg);
    const double after_one = theta[0];
    const double m1 = state.m[0][0], v1 = state.v[0][0];

    adam_step(p, g, state, cfg);
    CHECK(state.t == 2);
    CHECK(state.m[0][0] != m1);  // moments accumulate
    CHECK(state.v[0][0] != v1);
    CHECK(theta[0] < after_one);  // the second update keeps moving downhill

    // Momentum: after a burst of positive gradients, a zero gradient still moves theta.
    Vector zero = {0.0};
    const double before = theta[0];
    adam_step(p, refs_of(zero), state, cfg);
    CHECK(theta[0] != before);
}

TEST_CASE("adam_step validates shapes and config", "[optim]") {
    Vector a = {1.0, 2.0};
    Vector g_short = {1.0};
    auto p = refs_of(a);
    AdamState state = AdamState::init(p);
    CHECK_THROWS(adam_step(p, refs_of(g_short), state, AdamConfig{}));

    std::vector<TensorRef> empty;
    CHECK_THROWS(adam_step(p, empty, state, AdamConfig{}));

    AdamConfig bad;
    bad.learning_rate = 0.0;
    Vector g = {0.5, 0.5};
    CHECK_THROWS(adam_step(p, refs_of(g), state, bad));
    bad = AdamConfig{};
    bad.beta1 = 1.0;
    CHECK_THROWS(adam_step(p, refs_of(g), state, bad));
}

TEST_CASE("global_norm and clipping behave like one concatenated vector", "[optim]") {
    Vector a = {3.0};
    Vector b = {4.0};
    std::vector<TensorRef> refs = {{a.data(), 1}, {b.data(), 1}};
    CHECK(global_norm(refs) == Catch::Approx(5.0).margin(1e-15));

    SECTION("above the threshold: rescaled to max_norm, reported") {
        CHECK(clip_global_norm(refs, 2.5));
        CHECK(global_norm(refs) == Catch::Approx(2.5).margin(1e-12));
        CHECK(a[0] == Catch::Approx(1.5).margin(1e-12));
        CHECK(b[0] == Catch::Approx(2.0).margin(1e-12));
    }
    SECTION("at or below the threshold: untouched") {
        CHECK_FALSE(clip_global_norm(refs, 5.0));
        CHECK(a[0] == 3.0);
        CHECK(b[0] == 4.0);
        CHECK_FALSE(clip_global_norm(refs, 8.0));
    }
    SECTION("zero gradients never clip") {
        Vector z = {0.0, 0.0};
        std::vector<TensorRef> zr = {{z.data(), 2}};
        CHECK_FALSE(clip_global_norm(zr, 1.0));
    }
}

TEST_CASE("tensor_refs exposes every encoder tensor exactly once", "[optim]") {
    EncoderConfig cfg;
    cfg.vocab_size = 10;
    cfg.max_len = 6;
    cfg.model_dim = 8;
    cfg.n_heads = 2;
    cfg.ffn_dim = 12;
    cfg.n_layers = 3;
    EncoderParams params = init_params(cfg);
    const auto refs = tensor_refs(params);

    // 3 embedding tables + 12 tensors per layer.
    REQUIRE(refs.size() == 3 + 12 * 3);
    std::size_t total = 0;
    for (const TensorRef& r : refs) total += r.size;
    const std::size_t d = 8, f = 12;
    const std::size_t per_layer = 4 * d * d + d * f + f + f * d + d + 4 * d;
    CHECK(total == 10 * d + 6 * d + 2 * d + 3 * per_layer);

    // Mutating through a ref mutates the underlying parameter tensor.
    refs[0].data[0] = 123.0;
    CHECK(params.tok_emb(0, 0) == 123.0);
}

TEST_CASE("tensor_refs exposes every flow tensor exactly once", "[optim]") {
    FlowConfig cfg;
    cfg.n_layers = 3;
    cfg.hidden_dim = 5;
    FlowParams params = init_flow(8, cfg);
    const auto refs = tensor_refs(params);

    REQUIRE(refs.size() == 8 * 3);  // 8 tensors per coupling layer
    std::size_t total = 0;
    for (const TensorRef& r : refs) total += r.size;
    const std::size_t half = 4, w = 5;
    const std::size_t per_net = half * w + w + w * half + half;
    CHECK(total == 3 * 2 * per_net);

    refs[0].data[0] = -7.0;
    CHECK(params.layers[0].w_scale_hidden(0, 0) == -7.0);
}

TEST_CASE("train_flow aborts with a located error when the NLL leaves range", "[optim]") {
    std::vector<Vector> data(16, Vector{0.5, -0.5});
    data[3][0] = 1e200;  // finite vector whose squared norm overflows the NLL
    FlowConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 16;
    try {
        (void)train_flow(data, cfg);
        FAIL("expected an exception");
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        CHECK(msg.find("epoch 0") != std::string::npos);
        CHECK(msg.find("batch 0") != std::string::npos);
    }
}
