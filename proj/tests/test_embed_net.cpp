#include <cmath>
#include <numeric>

#include "doctest.h"
#include "gradcheck.hpp"
#include "wsteg/embed_net.hpp"
#include "wsteg/error.hpp"

using namespace wsteg;

namespace {

NormalizedImage constant_image(int size, float value) {
  NormalizedImage img;
  img.height = img.width = static_cast<std::size_t>(size);
  img.pixels.assign(img.height * img.width, value);
  return img;
}

template <typename T>
NetParams<T> zero_params(const ConvNetConfig& c) {
  return cast_params<T>(init_params(c, 0)).zeros_like();
}

}  // namespace

TEST_CASE("presets") {
  const auto small = ConvNetConfig::osl_small();
  CHECK(small.input_size == 100);
  CHECK(small.embedding_dim == 128);
  CHECK_NOTHROW(small.validate());
  const auto koch = ConvNetConfig::koch();
  CHECK(koch.input_size == 105);
  CHECK(koch.embedding_dim == 4096);
  CHECK_NOTHROW(koch.validate());
  CHECK(koch.flat_features() == 256 * 6 * 6);
  CHECK_THROWS_AS(ConvNetConfig::preset("resnet"), ArgumentError);

  auto tiny = gradcheck::tiny_config();
  CHECK(tiny.flat_features() == 12);
  CHECK(ConvNetConfig::from_json(tiny.to_json()).to_json() == tiny.to_json());
  tiny.input_size = 4;
  CHECK_THROWS_AS(tiny.validate(), ArgumentError);
  auto one = gradcheck::tiny_config();
  one.embedding_dim = 1;
  CHECK_THROWS_AS(one.validate(), ArgumentError);
}

TEST_CASE("forward on zero input with zero weights") {
  auto c = gradcheck::tiny_config();
  const auto image = constant_image(8, 0.0f);
  c.head = Head::none;
  const auto none = EmbeddingNet<float>(c).forward(zero_params<float>(c), image);
  CHECK(none == std::vector<float>(4, 0.0f));
  c.head = Head::sigmoid;
  const auto sig = EmbeddingNet<float>(c).forward(zero_params<float>(c), image);
  CHECK(sig == std::vector<float>(4, 0.5f));
}

TEST_CASE("forward shape and determinism") {
  const auto c = gradcheck::tiny_config();
  const EmbeddingNet<float> net(c);
  const auto params = init_params(c, 5);
  CHECK(params == init_params(c, 5));
  const auto images = gradcheck::random_images(3, 8, 1);
  for (const auto& img : images) {
    const auto e = net.forward(params, img);
    CHECK(e.size() == 4);
    CHECK(e == net.forward(params, img));
  }
  CHECK(embed_all(net, params, images)[2] == net.forward(params, images[2]));

  auto l2 = c;
  l2.l2_normalize = true;
  const auto e = EmbeddingNet<float>(l2).forward(params, images[0]);
  CHECK(std::sqrt(std::inner_product(e.begin(), e.end(), e.begin(), 0.0)) == doctest::Approx(1.0).epsilon(1e-6));

  NormalizedImage wrong = constant_image(9, 0.0f);
  CHECK_THROWS_AS(net.forward(params, wrong), ArgumentError);
}

TEST_CASE("triplet loss examples") {
  const std::vector<double> a{0, 0}, p{0, 0}, n{1, 0}, far{3, 4};
  CHECK(triplet_loss<double>(a, p, n, 1.0) == 0.0);
  CHECK(triplet_loss<double>(a, n, p, 1.0) == 2.0);
  CHECK(triplet_loss<double>(a, p, far, 1.0) == 0.0);
  CHECK(triplet_loss<double>(a, far, p, 0.5) == 25.5);
}

TEST_CASE("make_triplets counts") {
  const std::vector<int> six{0, 0, 0, 1, 1, 1};
  CHECK(make_triplets(six).size() == 36);
  const std::vector<int> same{1, 1, 1, 1};
  CHECK(make_triplets(same).empty());
  const std::vector<int> three{0, 0, 1};
  const auto t = make_triplets(three);
  CHECK(t == std::vector<Triplet>{{0, 1, 2}, {1, 0, 2}});
}

TEST_CASE("inactive triplets give zero gradient") {
  const auto c = gradcheck::tiny_config();
  const EmbeddingNet<double> net(c);
  const auto params = cast_params<double>(init_params(c, 2));
  auto images = gradcheck::random_images(3, 8, 4);
  images[1] = images[0];  // d(a, p) = 0
  const auto ea = net.forward(params, images[0]);
  const auto en = net.forward(params, images[2]);
  double d_an = 0;
  for (std::size_t i = 0; i < ea.size(); ++i) d_an += (ea[i] - en[i]) * (ea[i] - en[i]);
  REQUIRE(d_an > 0);
  const std::vector<Triplet> batch{{0, 1, 2}};
  auto grads = params.zeros_like();
  const double loss = batch_loss_and_gradient<double>(net, params, images, batch, d_an / 2, grads);
  CHECK(loss == 0.0);
  CHECK(grads == params.zeros_like());
}

TEST_CASE("gradients match central differences") {
  auto c = gradcheck::tiny_config();
  for (const bool l2 : {false, true}) {
    for (const Head head : {Head::sigmoid, Head::none}) {
      c.l2_normalize = l2;
      c.head = head;
      const auto r = gradcheck::run(c, 17);
      INFO("l2=" << l2 << " head=" << static_cast<int>(head) << " max_rel=" << r.max_rel);
      CHECK(r.fraction() >= 0.99);
      CHECK(r.max_rel <= 1e-3);
    }
  }
}

TEST_CASE("swapping two conv filters permutes their gradients") {
  const auto c = gradcheck::tiny_config();
  const EmbeddingNet<double> net(c);
  const auto images = gradcheck::random_images(4, 8, 9);
  const std::vector<int> labels{0, 0, 1, 1};
  const auto triplets = make_triplets(labels);
  const auto params = cast_params<double>(init_params(c, 21));

  const int k0 = c.blocks[0].kernel, k1 = c.blocks[1].kernel;
  const std::size_t f0 = static_cast<std::size_t>(k0 * k0);  // one filter of block 0 (1 input channel)
  const std::size_t s1 = static_cast<std::size_t>(k1 * k1);  // one in-channel slice of block 1
  auto swap_channels = [&](NetParams<double> p) {
    for (std::size_t i = 0; i < f0; ++i) std::swap(p.weights[0][i], p.weights[0][f0 + i]);
    std::swap(p.biases[0][0], p.biases[0][1]);
    for (int o = 0; o < c.blocks[1].out_channels; ++o) {
      const std::size_t base = static_cast<std::size_t>(o) * 2 * s1;
      for (std::size_t i = 0; i < s1; ++i) std::swap(p.weights[1][base + i], p.weights[1][base + s1 + i]);
    }
    return p;
  };

  auto g = params.zeros_like();
  const double loss = batch_loss_and_gradient<double>(net, params, images, triplets, 1.0, g);
  const auto swapped = swap_channels(params);
  auto gs = params.zeros_like();
  const double loss_s = batch_loss_and_gradient<double>(net, swapped, images, triplets, 1.0, gs);
  CHECK(loss_s == doctest::Approx(loss).epsilon(1e-12));

  const auto expected = swap_channels(g);
  for (std::size_t l = 0; l < g.weights.size(); ++l) {
    for (std::size_t i = 0; i < g.weights[l].size(); ++i)
      CHECK(gs.weights[l][i] == doctest::Approx(expected.weights[l][i]).epsilon(1e-10));
    for (std::size_t i = 0; i < g.biases[l].size(); ++i)
      CHECK(gs.biases[l][i] == doctest::Approx(expected.biases[l][i]).epsilon(1e-10));
  }
}

TEST_CASE("adam") {
  const auto c = gradcheck::tiny_config();
  const auto start = cast_params<double>(init_params(c, 1));

  SUBCASE("zero gradient leaves parameters alone") {
    auto p = start;
    AdamState<double> s(p);
    adam_step(s, p, p.zeros_like(), 1e-3);
    CHECK(p == start);
  }
  SUBCASE("first step moves each parameter by lr") {
    auto p = start;
    AdamState<double> s(p);
    auto g = p.zeros_like();
    for (auto& w : g.weights)
      for (std::size_t i = 0; i < w.size(); ++i) w[i] = i % 2 ? 1.0 : -3.0;
    adam_step(s, p, g, 1e-3);
    for (std::size_t i = 0; i < p.weights[0].size(); ++i) {
      const double step = p.weights[0][i] - start.weights[0][i];
      CHECK(std::abs(step) == doctest::Approx(1e-3).epsilon(1e-6));
      CHECK((step < 0) == (g.weights[0][i] > 0));
    }
  }
  SUBCASE("identical histories give identical updates") {
    auto a = start, b = start;
    AdamState<double> sa(a), sb(b);
    auto g = a.zeros_like();
    for (auto& w : g.weights) std::fill(w.begin(), w.end(), 0.25);
    for (int i = 0; i < 3; ++i) {
      adam_step(sa, a, g, 1e-2);
      adam_step(sb, b, g, 1e-2);
    }
    CHECK(a == b);
  }
}

TEST_CASE("training strategies") {
  const auto c = gradcheck::tiny_config();
  const auto images = gradcheck::random_images(4, 8, 2);
  const std::vector<int> labels{0, 0, 1, 1};

  TrainConfig es;
  es.strategy = Strategy::ES;
  const auto r_es = train(images, labels, c, es);
  CHECK(r_es.epochs == 1);
  CHECK(r_es.epoch_loss.size() == 1);

  TrainConfig st;
  st.strategy = Strategy::ST;
  CHECK(train(images, labels, c, st).epochs == 5);

  TrainConfig ub;
  ub.strategy = Strategy::UB;
  ub.ub_lo = 0.0;
  ub.ub_hi = 1e9;
  CHECK(train(images, labels, c, ub).epochs == 1);
  ub.ub_lo = 1e8;
  ub.max_epochs = 4;
  CHECK(train(images, labels, c, ub).epochs == 4);

  TrainConfig seeded;
  seeded.strategy = Strategy::ST;
  seeded.batch_size = 3;
  seeded.seed = 12;
  CHECK(train(images, labels, c, seeded).params == train(images, labels, c, seeded).params);

  const std::vector<int> one_class{0, 0, 0, 0};
  CHECK_THROWS_AS(train(images, one_class, c, es), ArgumentError);
  TrainConfig bad;
  bad.ub_lo = 2;
  bad.ub_hi = 1;
  CHECK_THROWS_AS(bad.validate(), ArgumentError);
  CHECK(strategy_from_name("ST") == Strategy::ST);
  CHECK_THROWS_AS(strategy_from_name("XX"), ArgumentError);
}

TEST_CASE("one epoch on separable data does not raise the loss") {
  auto c = gradcheck::tiny_config();
  c.head = Head::none;
  int improved = 0;
  const int runs = 20;
  for (int seed = 0; seed < runs; ++seed) {
    c.init_seed = static_cast<std::uint64_t>(seed);
    std::vector<NormalizedImage> images;
    std::vector<int> labels;
    Rng rng(static_cast<std::uint64_t>(100 + seed));
    for (int i = 0; i < 6; ++i) {
      const int label = i % 2;
      auto img = constant_image(8, 0.0f);
      for (auto& p : img.pixels) p = static_cast<float>(0.1 + 0.6 * label + 0.2 * rng.uniform());
      images.push_back(img);
      labels.push_back(label);
    }
    TrainConfig cfg;
    cfg.strategy = Strategy::ES;
    cfg.lr = 1e-3;
    cfg.seed = static_cast<std::uint64_t>(seed);
    const auto triplets = make_triplets(labels);
    const EmbeddingNet<float> net(c);
    auto scratch = init_params(c, c.init_seed).zeros_like();
    const float before =
        batch_loss_and_gradient<float>(net, init_params(c, c.init_seed), images, triplets, 1.0f, scratch);
    const auto trained = train(images, labels, c, cfg);
    const float after = batch_loss_and_gradient<float>(net, trained.params, images, triplets, 1.0f, scratch);
    if (after <= before) ++improved;
  }
  CHECK(improved >= runs * 9 / 10);
}
