#include <doctest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "idlink/error.hpp"
#include "idlink/log.hpp"
#include "idlink/models.hpp"
#include "properties.hpp"
#include "support.hpp"

using namespace idlink;
using idlink::props::random_matrix;
using idlink::testing::complete_graph;
using idlink::testing::random_graph;
using idlink::testing::two_triangles;

namespace {

Tensor constant(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& r : rows) {
    Eigen::Index j = 0;
    for (double v : r) m(i, j++) = v;
    ++i;
  }
  return Tensor::constant(m);
}

EdgeSplit whole_graph_split(const Graph& g) {
  EdgeSplit s;
  s.train_graph = g;
  s.train_pos.assign(g.edges().begin(), g.edges().end());
  return s;
}

TrainConfig small_config() {
  TrainConfig c;
  c.encoder.layer_size = 8;
  c.encoder.n_layers = 2;
  c.proj_hidden = 8;
  c.decoder_hidden = 8;
  c.ct_epochs = 5;
  c.decoder_epochs = 5;
  c.gnn_lr = c.pred_lr = 0.01;
  return c;
}

AugmentationSpec no_perturbation() {
  AugmentationSpec a;
  a.drop_edge_rate_1 = a.drop_edge_rate_2 = a.drop_feature_rate_1 = a.drop_feature_rate_2 = 0.0;
  return a;
}

std::vector<Matrix> snapshot(const GcnEncoder& e) {
  std::vector<Matrix> out;
  for (const Parameter* p : e.parameters()) out.push_back(p->value());
  return out;
}

}  // namespace

TEST_SUITE("models") {
  TEST_CASE("enum names round-trip") {
    for (auto m : {ModelKind::gcn_supervised, ModelKind::grace, ModelKind::bgrl, ModelKind::lgrace, ModelKind::lbgrl})
      CHECK(parse_model(to_string(m)) == m);
    CHECK(parse_norm("layer") == NormKind::layer);
    CHECK(parse_decoder_loss("log_sig") == DecoderLoss::log_sig);
    CHECK_THROWS_AS(parse_model("gat"), std::invalid_argument);
    CHECK(is_asymmetric(ModelKind::lbgrl));
    CHECK_FALSE(is_asymmetric(ModelKind::lgrace));
  }

  TEST_CASE("encoder output shape and zero weights") {
    EncoderConfig cfg;
    cfg.layer_size = 7;
    cfg.n_layers = 3;
    cfg.norm = NormKind::layer;
    GcnEncoder enc(6, cfg, 1);
    CHECK(enc.embed(two_triangles()).rows() == 6);
    CHECK(enc.embed(two_triangles()).cols() == 7);
    for (Parameter* p : enc.parameters())
      if (p->name.ends_with("weight")) p->tensor.mutable_value().setZero();
    CHECK(enc.embed(two_triangles()).isZero());
    CHECK_THROWS_AS(enc.embed(Graph(5, {{0, 1}})), std::invalid_argument);
  }

  TEST_CASE("encoder is permutation equivariant") {
    Rng rng = make_rng(3);
    const Graph g0 = random_graph(10, 0.3, 2);
    const Matrix x = random_matrix(10, 5, rng);
    const Graph g = g0.with_features(FeatureMatrix::dense(x));
    std::vector<NodeId> perm(10);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm.begin(), perm.end(), rng);
    std::vector<Edge> pe;
    for (const Edge& e : g.edges()) pe.push_back(make_edge(perm[e.u], perm[e.v]));
    Matrix px(10, 5);
    for (int i = 0; i < 10; ++i) px.row(perm[i]) = x.row(i);
    const Graph pg = Graph(10, pe, FeatureMatrix::dense(px));

    for (NormKind norm : {NormKind::batch, NormKind::layer}) {
      EncoderConfig cfg;
      cfg.layer_size = 6;
      cfg.norm = norm;
      GcnEncoder enc(5, cfg, 9);
      const Matrix h = enc.forward(g, true).value();
      const Matrix ph = enc.forward(pg, true).value();
      for (int i = 0; i < 10; ++i) CHECK((h.row(i) - ph.row(perm[i])).cwiseAbs().maxCoeff() < 1e-12);
    }
  }

  TEST_CASE("weight standardization is a forward-time reparameterization") {
    EncoderConfig cfg;
    cfg.layer_size = 6;
    cfg.weight_standardization = true;
    GcnEncoder enc(6, cfg, 4);
    const auto before = snapshot(enc);
    const Matrix h = enc.embed(two_triangles());
    CHECK(snapshot(enc) == before);
    cfg.weight_standardization = false;
    GcnEncoder plain(6, cfg, 4);
    CHECK_FALSE(plain.embed(two_triangles()).isApprox(h));
    // Two triangles would make every batch-normalized column two-valued and the gradients vanish.
    const Graph g(6, std::vector<Edge>{{0, 1}, {1, 2}, {0, 2}, {2, 3}, {3, 4}, {4, 5}, {1, 5}});
    std::vector<Parameter*> params = enc.parameters();
    CHECK(ad::grad_check_params([&] { return ad::sum(ad::exp(ad::scalar_mul(enc.forward(g, true), 0.1))); }, params) <
          1e-5);
  }

  TEST_CASE("link representation") {
    const Tensor h = constant({{1, 2}, {3, 4}, {0, 0}});
    const Edge uv{0, 1};
    const Matrix r = link_representation(h, std::span(&uv, 1), nullptr).value();
    CHECK(r == (Matrix(1, 2) << 3, 8).finished());
    const std::vector<Edge> both{{0, 1}, {1, 0}, {2, 1}};
    Mlp mlp(2, 4, 3, Mlp::Activation::prelu, 1);
    const Matrix m = link_representation(h, both, &mlp).value();
    CHECK(m.row(0) == m.row(1));
    CHECK(link_representation(h, both, nullptr).value().row(2).isZero());
  }

  TEST_CASE("grace loss reference values") {
    CHECK(grace_loss_projected(constant({{1, 0}}), constant({{0.3, 2}}), 0.5).item() == 0.0);
    const Tensor u = constant({{1, 0}, {0, 1}});
    const double expected = std::log(std::exp(1.0) + 2.0) - 1.0;
    CHECK(grace_loss_projected(u, u, 1.0).item() == doctest::Approx(expected).epsilon(1e-14));
    CHECK(expected == doctest::Approx(0.5514).epsilon(1e-4));
    CHECK_THROWS_AS(grace_loss_projected(u, u, 0.0), std::invalid_argument);
  }

  TEST_CASE("grace loss symmetries") {
    Rng rng = make_rng(8);
    const Matrix a = random_matrix(7, 4, rng), b = random_matrix(7, 4, rng);
    const double l = grace_loss_projected(Tensor::constant(a), Tensor::constant(b), 0.4).item();
    CHECK(std::abs(l - grace_loss_projected(Tensor::constant(b), Tensor::constant(a), 0.4).item()) < 1e-12);
    Eigen::PermutationMatrix<Eigen::Dynamic> p(7);
    p.setIdentity();
    for (int i = 0; i < 7; ++i) std::swap(p.indices()[i], p.indices()[uniform_index(rng, 7)]);
    const double lp = grace_loss_projected(Tensor::constant(p * a), Tensor::constant(p * b), 0.4).item();
    CHECK(std::abs(l - lp) < 1e-12);
  }

  TEST_CASE("link contrastive loss reference value") {
    const Tensor pos = constant({{1, 0}});
    const Tensor neg = constant({{0, 1}});
    CHECK(lgrace_loss(pos, pos, neg, neg, 1.0).item() == doctest::Approx(-1.0).epsilon(1e-14));
    // The optional positive term adds e^1 to the denominator.
    LinkLossOptions with_pos;
    with_pos.include_positive = true;
    CHECK(lgrace_loss(pos, pos, neg, neg, 1.0, with_pos).item() ==
          doctest::Approx(-(1.0 - std::log(std::exp(1.0) + 1.0))).epsilon(1e-14));
    CHECK_THROWS_AS(lgrace_loss(pos, pos, Tensor::constant(Matrix(0, 2)), Tensor::constant(Matrix(0, 2)), 1.0),
                    std::invalid_argument);
  }

  TEST_CASE("link contrastive loss decreases with the temperature") {
    const Tensor pos = constant({{1, 0, 0}, {1, 0, 0}});
    const Tensor neg = constant({{0, 1, 0}, {0, 0, 1}, {0, 1, 1}});
    double prev = std::numeric_limits<double>::infinity();
    for (double tau = 0.9; tau > 0.05; tau -= 0.1) {
      const double l = lgrace_loss(pos, pos, neg, neg, tau).item();
      CHECK(l < prev);
      prev = l;
    }
  }

  TEST_CASE("link contrastive loss symmetries") {
    Rng rng = make_rng(6);
    const Matrix p1 = random_matrix(4, 3, rng), p2 = random_matrix(4, 3, rng);
    const Matrix n1 = random_matrix(5, 3, rng), n2 = random_matrix(5, 3, rng);
    auto L = [](const Matrix& a, const Matrix& b, const Matrix& c, const Matrix& d, LinkLossOptions o = {}) {
      return lgrace_loss(Tensor::constant(a), Tensor::constant(b), Tensor::constant(c), Tensor::constant(d), 0.5, o)
          .item();
    };
    const double l = L(p1, p2, n1, n2);
    CHECK(std::abs(l - L(p2, p1, n2, n1)) < 1e-12);
    LinkLossOptions neg_anchor;
    neg_anchor.anchor = LinkAnchor::negative;
    CHECK(std::isfinite(L(p1, p2, n1, n2, neg_anchor)));
    CHECK(std::abs(L(p1, p2, n1, n2, neg_anchor) - L(p2, p1, n2, n1, neg_anchor)) < 1e-12);
  }

  TEST_CASE("link contrastive loss ignores the order of inter-view negatives") {
    // With one positive the exclusion touches only negative 0, so negatives 1.. may be permuted freely.
    Rng rng = make_rng(2);
    const Matrix p1 = random_matrix(1, 3, rng), p2 = random_matrix(1, 3, rng);
    const Matrix n1 = random_matrix(4, 3, rng), n2 = random_matrix(4, 3, rng);
    Matrix m1 = n1, m2 = n2;
    m1.row(1).swap(m1.row(3));
    m2.row(1).swap(m2.row(3));
    const auto T = [](const Matrix& m) { return Tensor::constant(m); };
    CHECK(std::abs(lgrace_loss(T(p1), T(p2), T(n1), T(n2), 0.5).item() -
                   lgrace_loss(T(p1), T(p2), T(m1), T(m2), 0.5).item()) < 1e-12);
  }

  TEST_CASE("bootstrap losses") {
    const Tensor a = constant({{1, 2}, {-1, 0.5}});
    CHECK(bgrl_loss(a, a.value()).item() == doctest::Approx(-2.0));
    CHECK(bgrl_loss(constant({{1, 0}}), constant({{0, 3}}).value()).item() == doctest::Approx(0.0));
    CHECK(lbgrl_loss(a, -a.value()).item() == doctest::Approx(2.0));
    Matrix scaled = a.value();
    scaled.row(1) *= 7.5;
    Rng rng = make_rng(1);
    const Matrix t = random_matrix(2, 2, rng);
    CHECK(lbgrl_loss(Tensor::constant(scaled), t).item() == doctest::Approx(lbgrl_loss(a, t).item()).epsilon(1e-14));
    CHECK_THROWS_AS(lbgrl_loss(a, Matrix::Zero(3, 2)), std::invalid_argument);

    const Tensor online = Tensor::parameter(a.value());
    Parameter target_source("t", t);
    ad::backward(symmetric_bgrl_loss(online, target_source.value(), online, target_source.value()));
    CHECK(online.has_grad());
    CHECK_FALSE(target_source.tensor.has_grad());
  }

  TEST_CASE("full losses pass the gradient check") {
    for (Seed seed : {1, 2}) {
      for (const auto& [name, err] : props::loss_gradient_errors(seed)) {
        INFO(name << " seed " << seed);
        CHECK(err < 1e-4);
      }
    }
  }

  TEST_CASE("link set selection") {
    const Graph g = random_graph(20, 0.3, 4);
    const auto same = select_link_sets(g, g, 1);
    REQUIRE(same);
    CHECK(same->pos.size() == g.num_edges());
    CHECK(same->neg.size() == g.num_edges());

    const Graph a(4, {{0, 1}}), b(4, {{2, 3}});
    CHECK_FALSE(select_link_sets(a, b, 1));

    const Graph v1 = g.with_edges({g.edges().begin(), g.edges().begin() + 30});
    const Graph v2 = g.with_edges({g.edges().begin() + 10, g.edges().end()});
    const auto sets = select_link_sets(v1, v2, 3);
    REQUIRE(sets);
    CHECK(sets->pos.size() == 20);
    CHECK(sets->neg.size() == sets->pos.size());
    for (const Edge& e : sets->neg) {
      CHECK_FALSE(v1.contains(e.u, e.v));
      CHECK_FALSE(v2.contains(e.u, e.v));
    }
  }

  TEST_CASE("grace training lowers the loss on two triangles") {
    TrainConfig cfg = small_config();
    cfg.ct_epochs = 100;
    const TrainState st = train_encoder(whole_graph_split(two_triangles()), no_perturbation(), std::nullopt,
                                        ModelKind::grace, cfg, 3);
    REQUIRE(st.loss_history.size() == 100);
    CHECK(st.loss_history.back().second < st.loss_history.front().second);
  }

  TEST_CASE("target encoder follows the EMA recursion and never gets gradients") {
    for (ModelKind kind : {ModelKind::bgrl, ModelKind::lbgrl}) {
      TrainConfig cfg = small_config();
      cfg.ct_epochs = 3;
      cfg.ema_decay = 0.9;
      std::vector<Matrix> expected;
      TrainHooks hooks;
      hooks.on_start = [&](const TrainState& st) {
        for (const auto& t : st.target) expected.push_back(t.values);
      };
      hooks.on_step = [&](const TrainState& st) {
        const auto online = st.online->parameters();
        for (std::size_t i = 0; i < expected.size(); ++i)
          expected[i] = 0.9 * expected[i] + 0.1 * online[i]->value();
        for (const Tensor& t : st.target_tensors()) {
          CHECK_FALSE(t.has_backward_node());
          CHECK_FALSE(t.requires_grad());
        }
      };
      const Graph g = random_graph(12, 0.4, 5);
      const TrainState st = train_encoder(whole_graph_split(g), AugmentationSpec{}, std::nullopt, kind, cfg, 2, hooks);
      REQUIRE(st.target.size() == expected.size());
      for (std::size_t i = 0; i < expected.size(); ++i) CHECK(st.target[i].values.isApprox(expected[i], 1e-14));
      CHECK(st.epoch == 3);
    }
  }

  TEST_CASE("training is bit-identical for a fixed seed") {
    const Graph g = random_graph(14, 0.35, 7);
    const BlockState b = louvain(g, 1);
    for (ModelKind kind : {ModelKind::grace, ModelKind::bgrl, ModelKind::lgrace, ModelKind::lbgrl}) {
      AugmentationSpec spec;
      spec.kind = AugmentationKind::sbm2;
      const TrainConfig cfg = small_config();
      const TrainState a = train_encoder(whole_graph_split(g), spec, b, kind, cfg, 11);
      const TrainState c = train_encoder(whole_graph_split(g), spec, b, kind, cfg, 11);
      CHECK(snapshot(*a.online) == snapshot(*c.online));
      CHECK(a.loss_history == c.loss_history);
      const TrainState d = train_encoder(whole_graph_split(g), spec, b, kind, cfg, 12);
      CHECK(snapshot(*a.online) != snapshot(*d.online));
    }
  }

  TEST_CASE("epochs without shared edges are skipped") {
    const LogLevel saved = log_level().load();
    log_level() = LogLevel::silent;
    AugmentationSpec spec;
    spec.kind = AugmentationKind::sbm2;
    // One block holding 2 edges among 20 slots; two independent samples rarely overlap.
    std::vector<Edge> e{{0, 1}, {2, 3}};
    const Graph g(7, e);
    const BlockState b = BlockState::from_labels(std::vector<int>(7, 0), BlockSource::external);
    TrainConfig cfg = small_config();
    cfg.ct_epochs = 20;
    const TrainState st = train_encoder(whole_graph_split(g), spec, b, ModelKind::lgrace, cfg, 1);
    log_level() = saved;
    CHECK(st.skipped_epochs > 0);
    CHECK(st.skipped_epochs + static_cast<int>(st.loss_history.size()) == 20);
  }

  TEST_CASE("the supervised baseline has no self-supervised stage") {
    CHECK_THROWS_AS(train_encoder(whole_graph_split(two_triangles()), {}, std::nullopt, ModelKind::gcn_supervised,
                                  small_config(), 1),
                    std::invalid_argument);
  }

  TEST_CASE("decoder separates pre-separated embeddings") {
    // Two disjoint 6-cliques; embeddings are community indicators, so positives have a
    // nonzero Hadamard product and every sampled negative has a zero one.
    std::vector<Edge> e;
    for (NodeId u = 0; u < 6; ++u)
      for (NodeId v = u + 1; v < 6; ++v) {
        e.push_back({u, v});
        e.push_back({u + 6, v + 6});
      }
    const Graph g(12, e);
    Matrix h = Matrix::Zero(12, 2);
    h.block(0, 0, 6, 1).setOnes();
    h.block(6, 1, 6, 1).setOnes();
    TrainConfig cfg = small_config();
    cfg.decoder_epochs = 100;
    cfg.batch_size = 6400;
    const EdgeSplit split = whole_graph_split(g);
    for (DecoderLoss loss : {DecoderLoss::bce, DecoderLoss::log_sig}) {
      cfg.loss_func = loss;
      const auto dec = std::make_shared<Decoder>(train_decoder([&](int) { return h; }, split, cfg, 1));
      const LinkPredictor p{h, dec};
      const Eigen::VectorXd pos = p.scores(split.train_pos);
      const std::vector<Edge> neg = sample_negative_pairs(g, 30, {}, 2);
      const Eigen::VectorXd negs = p.scores(neg);
      CHECK(pos.minCoeff() > negs.maxCoeff());
      if (loss == DecoderLoss::bce) {
        CHECK(pos.minCoeff() > 0.5);
        CHECK(negs.maxCoeff() < 0.5);
      }
    }
  }

  TEST_CASE("decoder on zero embeddings gives a constant score") {
    const Graph g = random_graph(15, 0.3, 3);
    const Matrix h = Matrix::Zero(15, 4);
    const auto dec = std::make_shared<Decoder>(train_decoder([&](int) { return h; }, whole_graph_split(g), small_config(), 1));
    const Eigen::VectorXd s = predict_scores(LinkPredictor{h, dec}, std::vector<Edge>{{0, 1}, {2, 9}, {4, 5}});
    CHECK(s.maxCoeff() == s.minCoeff());
  }

  TEST_CASE("non-finite decoder loss aborts training") {
    const Graph g = random_graph(10, 0.4, 3);
    const Matrix h = Matrix::Constant(10, 3, std::numeric_limits<double>::quiet_NaN());
    CHECK_THROWS_AS(train_decoder([&](int) { return h; }, whole_graph_split(g), small_config(), 1), TrainingDiverged);
  }

  TEST_CASE("decoder losses") {
    const Tensor zero = constant({{0}, {0}});
    CHECK(decoder_loss(zero, zero, DecoderLoss::bce).item() == doctest::Approx(std::log(2.0)));
    CHECK(decoder_loss(zero, zero, DecoderLoss::log_sig).item() == doctest::Approx(std::log(2.0)));
    CHECK(decoder_loss(constant({{3}}), constant({{1}}), DecoderLoss::log_sig).item() ==
          doctest::Approx(std::log1p(std::exp(-2.0))));
  }

  TEST_CASE("predict_scores contract") {
    Rng rng = make_rng(4);
    const Matrix h = random_matrix(10, 4, rng) * 50.0;
    const auto dec = std::make_shared<Decoder>(4, 8, 3);
    const LinkPredictor p{h, dec};
    const std::vector<Edge> pairs{{0, 1}, {3, 7}, {2, 9}, {5, 6}};
    std::vector<Edge> flipped;
    for (const Edge& e : pairs) flipped.push_back(Edge{e.v, e.u});
    const Eigen::VectorXd s = predict_scores(p, pairs);
    CHECK(s.size() == 4);
    CHECK(s == predict_scores(p, flipped));
    CHECK(s.minCoeff() > 0.0);
    CHECK(s.maxCoeff() < 1.0);
    CHECK(predict_scores(p, std::vector<Edge>{}).size() == 0);
  }

  TEST_CASE("supervised GCN trains end to end") {
    const Graph g = random_graph(20, 0.3, 9);
    const EdgeSplit split = random_link_split(g, {}, 1);
    TrainConfig cfg = small_config();
    cfg.decoder_epochs = 30;
    const SupervisedModel a = train_supervised_gcn(split, cfg, 5);
    const SupervisedModel b = train_supervised_gcn(split, cfg, 5);
    REQUIRE(a.loss_history.size() == 30);
    CHECK(a.loss_history.back().second < a.loss_history.front().second);
    CHECK(snapshot(*a.encoder) == snapshot(*b.encoder));
  }

  TEST_CASE("mask_input re-embeds with masked features") {
    const Graph g = random_graph(20, 0.3, 9);
    TrainConfig cfg = small_config();
    cfg.mask_input = true;
    const TrainState st = train_encoder(whole_graph_split(g), {}, std::nullopt, ModelKind::grace, cfg, 2);
    const Decoder d1 = train_decoder(st, whole_graph_split(g), cfg, 3);
    cfg.mask_input = false;
    const Decoder d2 = train_decoder(st, whole_graph_split(g), cfg, 3);
    CHECK(d1.parameters()[0]->value() != d2.parameters()[0]->value());
  }

  TEST_CASE("link loss path never builds an n x n tensor") {
    const NodeId n = 300;
    const Graph g = random_graph(n, 0.02, 4);
    TrainConfig cfg = small_config();
    cfg.ct_epochs = 2;
    ad::MemoryProbe probe;
    const TrainState st = train_encoder(whole_graph_split(g), {}, std::nullopt, ModelKind::lgrace, cfg, 1);
    CHECK_FALSE(probe.saw_shape(n, n));
    // Bounded by the positive-link cap, whatever n is.
    const auto cap = static_cast<std::size_t>(cfg.batch_size);
    CHECK(probe.max_tensor_elements() <= 2 * cap * cap);
    cfg.batch_size = 6400;
    ad::MemoryProbe node_probe;
    train_encoder(whole_graph_split(g), {}, std::nullopt, ModelKind::grace, cfg, 1);
    CHECK(node_probe.saw_shape(n, n));
  }
}
