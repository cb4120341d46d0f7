#include "nus/embedding.hpp"
#include "nus/esim.hpp"
#include "nus/kesim.hpp"

#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

using namespace nus;
using ad::Mat;
using ad::Tape;
using ad::Var;

namespace {

Mat random_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng, double scale = 1.0) {
  std::uniform_real_distribution<double> u(-scale, scale);
  Mat m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = u(rng);
  return m;
}

corpus::Vocabulary vocab_of(const std::vector<corpus::Tokens>& seqs) {
  corpus::Vocabulary v;
  for (const auto& s : seqs)
    for (const auto& t : s) {
      v.add(t);
      for (char32_t c : corpus::utf8_decode(t)) v.add_char(c);
    }
  return v;
}

esim::ModelConfig tiny_config() {
  esim::ModelConfig mc;
  mc.hidden = 4;
  mc.mlp_hidden = 4;
  mc.embedding.dim_a = 3;
  mc.embedding.dim_b = 2;
  mc.embedding.char_dim = 2;
  mc.embedding.char_emb_dim = 2;
  mc.init_scale = 0.5;
  return mc;
}

}  // namespace

TEST_CASE("co-attention on a hand-set 2x2 case") {
  const Mat a{{1.0, 0.0}, {0.5, -1.0}};
  const Mat b{{2.0, 1.0}, {0.0, 3.0}};
  Tape tape;
  const auto att = esim::co_attend(tape.constant(a), tape.constant(b));
  // Direct evaluation: e_ij = a_i . b_j, w_ij = exp(e_ij) / sum_k exp(e_ik), a~_i = sum_j w_ij b_j.
  for (int i = 0; i < 2; ++i) {
    double e[2], z = 0;
    for (int j = 0; j < 2; ++j) {
      e[j] = a(i, 0) * b(j, 0) + a(i, 1) * b(j, 1);
      z += std::exp(e[j]);
    }
    for (int d = 0; d < 2; ++d) {
      const double expect = std::exp(e[0]) / z * b(0, d) + std::exp(e[1]) / z * b(1, d);
      CHECK(att.attended_a.value()(i, d) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
  for (int j = 0; j < 2; ++j) {
    double e[2], z = 0;
    for (int i = 0; i < 2; ++i) {
      e[i] = a(i, 0) * b(j, 0) + a(i, 1) * b(j, 1);
      z += std::exp(e[i]);
    }
    for (int d = 0; d < 2; ++d) {
      const double expect = std::exp(e[0]) / z * a(0, d) + std::exp(e[1]) / z * a(1, d);
      CHECK(att.attended_b.value()(j, d) == doctest::Approx(expect).epsilon(1e-12));
    }
  }
}

TEST_CASE("attending over identical rows returns that row") {
  std::mt19937_64 rng(5);
  const Mat a = random_mat(4, 6, rng);
  const Mat r = random_mat(1, 6, rng);
  const Mat b = r.replicate(3, 1);
  Tape tape;
  const auto att = esim::co_attend(tape.constant(a), tape.constant(b));
  for (Eigen::Index i = 0; i < 4; ++i) CHECK((att.attended_a.value().row(i) - r).cwiseAbs().maxCoeff() < 1e-12);
  CHECK((att.weights_a.value().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK((att.weights_b.value().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("enrichment blocks") {
  std::mt19937_64 rng(6);
  const Mat o = random_mat(3, 400, rng);
  Tape tape;
  Var same = esim::enrich(tape.constant(o), tape.constant(o));
  CHECK(same.cols() == 1600);
  CHECK(same.value().middleCols(800, 400).isZero());
  const Mat att = random_mat(3, 5, rng);
  Var zero = esim::enrich(tape.constant(Mat::Zero(3, 5)), tape.constant(att));
  CHECK(zero.value().middleCols(10, 5).isApprox(-att));
  CHECK(zero.value().middleCols(15, 5).isZero());
}

TEST_CASE("BiLSTM shapes and direction symmetry") {
  std::mt19937_64 rng(7);
  ad::ParameterStore store;
  auto bi = nn::BiLstm::create(store, "enc", 5, 3, 0.5, rng);
  // Tie the backward direction to the forward one.
  bi.backward.w_in->value = bi.forward.w_in->value;
  bi.backward.w_rec->value = bi.forward.w_rec->value;
  bi.backward.bias->value = bi.forward.bias->value;

  for (int trial = 0; trial < 10; ++trial) {
    const Eigen::Index len = 1 + trial % 6;
    const Mat x = random_mat(len, 5, rng);
    const Mat xr = x.colwise().reverse();
    Tape tape;
    const Mat enc = bi.encode(tape, tape.constant(x)).value();
    const Mat rev = bi.encode(tape, tape.constant(xr)).value();
    CHECK(enc.rows() == len);
    CHECK(enc.cols() == 6);
    Mat expect(len, 6);
    expect.leftCols(3) = enc.rightCols(3).colwise().reverse();
    expect.rightCols(3) = enc.leftCols(3).colwise().reverse();
    CHECK((rev - expect).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("pooling and prediction layer") {
  std::mt19937_64 rng(8);
  ad::ParameterStore store;
  auto agg = nn::BiLstm::create(store, "agg", 8, 2, 0.5, rng);
  Tape tape;
  const Mat ma = random_mat(1, 8, rng);
  Var v1 = esim::aggregate_and_pool(tape, tape.constant(ma), tape.constant(random_mat(3, 8, rng)), agg);
  Var v2 = esim::aggregate_and_pool(tape, tape.constant(ma), tape.constant(random_mat(5, 8, rng)), agg);
  CHECK(v1.cols() == 16);
  // Length-1 context: max over time equals the final state.
  CHECK(v1.value().leftCols(4).isApprox(v1.value().middleCols(8, 4)));
  // The context halves do not depend on the response stream.
  CHECK(v1.value().leftCols(4) == v2.value().leftCols(4));
  CHECK(v1.value().middleCols(8, 4) == v2.value().middleCols(8, 4));

  auto mlp = nn::Mlp::create(store, "mlp", 16, 256, 0.5, rng);
  CHECK(mlp.w1->value.cols() == 256);
  for (auto* p : {mlp.w1, mlp.b1, mlp.w2, mlp.b2}) p->value.setZero();
  Var p = esim::score(tape, tape.constant(random_mat(2, 16, rng, 100.0)), mlp);
  CHECK(p.value()(0, 0) == doctest::Approx(0.5));
  CHECK(esim::bce_loss(p, {1, 0}).value()(0, 0) == doctest::Approx(std::log(2.0)));
  CHECK_THROWS(esim::bce_loss(p, {1, 0.5}));
}

TEST_CASE("embedding tables and word representation") {
  const auto path = (std::filesystem::temp_directory_path() / "nus_vectors.txt").string();
  {
    std::ofstream f(path);
    f << "hello 0.1 0.2\nworld 0.3 0.4\nhello 9 9\n";
  }
  const auto table = embedding::EmbeddingTable::load_vectors(path, 2);
  CHECK(table.size() == 2);
  CHECK(table.lookup("hello").isApprox(embedding::RowVec{{0.1, 0.2}}));
  CHECK(table.lookup("absent") == embedding::oov_vector("absent", 2, 0));
  CHECK(embedding::oov_vector("absent", 300, 3) == embedding::oov_vector("absent", 300, 3));
  CHECK(embedding::oov_vector("absent", 300, 3).cwiseAbs().maxCoeff() <= embedding::kOovScale);
  {
    std::ofstream f(path);
    f << "hello 0.1 0.2\nbad 0.1 0.2 0.3\n";
  }
  try {
    embedding::EmbeddingTable::load_vectors(path, 2);
    FAIL("expected an error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
  std::filesystem::remove(path);

  const auto vocab = vocab_of({{"x", "hello", "<pad>"}});
  ad::ParameterStore store;
  embedding::EmbeddingConfig cfg;
  CHECK(cfg.output_dim() == 480);
  cfg.dim_a = 2;
  embedding::Embedder emb(store, cfg, vocab, &table, nullptr);
  CHECK(emb.dim() == 182);
  Tape tape;
  const Mat r = emb.represent(tape, corpus::Tokens{"hello", "x", "never-seen", "<pad>", "hello"}).value();
  CHECK(r.cols() == 182);
  CHECK(r.row(0) == r.row(4));
  CHECK(r.row(0).leftCols(2).isApprox(embedding::RowVec{{0.1, 0.2}}));
  CHECK(r.row(3).isZero());
  CHECK(r.row(2).leftCols(2) == embedding::oov_vector("never-seen", 2, table.seed()));
  const Mat single = embedding::char_compose(tape, "x", emb.char_encoder(), vocab).value();
  CHECK(single.cols() == 80);
}

TEST_CASE("dimension chain of the default configuration") {
  const corpus::Tokens ctx{"how", "do", "i", "mount", "__eot__"}, resp{"use", "mount"}, know{"mount", "attaches"};
  const auto vocab = vocab_of({ctx, resp, know});
  esim::ModelConfig cfg;
  const std::vector<esim::PairInput> pairs{{&ctx, &resp, &know}};

  esim::EsimModel esim_model(cfg, vocab);
  esim::Trace trace;
  Tape tape(false);
  esim_model.forward(tape, pairs, &trace);
  const std::vector<std::pair<std::string, Eigen::Index>> esim_widths{
      {"input", 480}, {"encoded", 400}, {"enriched", 1600}, {"aggregated", 400}, {"pooled", 1600}};
  CHECK(trace.widths == esim_widths);
  CHECK(trace.attention_weights.size() == 2);

  kesim::KesimModel kesim_model(cfg, vocab);
  esim::Trace ktrace;
  Tape ktape(false);
  kesim_model.forward(ktape, pairs, &ktrace);
  CHECK(ktrace.widths.back() == std::pair<std::string, Eigen::Index>{"merged", 2400});
  CHECK(ktrace.attention_weights.size() == 6);
  CHECK(kesim_model.mlp().input_dim() == 2400);
}

TEST_CASE("K-ESIM views and merge") {
  std::mt19937_64 rng(9);
  const Mat r = random_mat(1, 6, rng);
  Tape tape;
  kesim::TripleEncoded t{tape.constant(random_mat(4, 6, rng)), tape.constant(random_mat(3, 6, rng)),
                         tape.constant(r.replicate(5, 1))};
  const auto views = kesim::triple_co_attend(t);
  CHECK(views.views.size() == 6);
  const Mat ck = views.view(kesim::Stream::context, kesim::Stream::knowledge).attended.value();
  for (Eigen::Index i = 0; i < ck.rows(); ++i) CHECK((ck.row(i) - r).cwiseAbs().maxCoeff() < 1e-12);
  for (const auto& w : views.weights) CHECK((w.value().rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);

  Var x = tape.constant(random_mat(1, 8, rng)), y = tape.constant(random_mat(1, 8, rng));
  CHECK(kesim::additive_merge(x, x).value() == 2.0 * x.value());
  CHECK(kesim::additive_merge(x, y).value() == kesim::additive_merge(y, x).value());
}

TEST_CASE("gradient check of tiny ESIM and K-ESIM") {
  const std::vector<corpus::Tokens> seqs{{"how", "do", "i", "ls", "__eot__"}, {"try", "ls", "-la"}, {"no"},
                                         {"ls", "lists", "files"}};
  const auto vocab = vocab_of(seqs);
  const std::vector<esim::PairInput> pairs{{&seqs[0], &seqs[1], &seqs[3]}, {&seqs[0], &seqs[2], &seqs[3]}};
  const std::vector<double> labels{1, 0};
  for (auto variant : {esim::Variant::esim, esim::Variant::kesim}) {
    CAPTURE(esim::to_string(variant));
    auto model = esim::make_model(variant, tiny_config(), vocab);
    ad::LossFn loss = [&](Tape& tape) { return esim::bce_loss(model->forward(tape, pairs), labels); };
    auto grads = ad::analytic_gradients(loss, model->params());
    const auto r = ad::gradient_check(loss, model->params(), 1e-5, &grads);
    CHECK(r.max_rel_error < 1e-6);
    CHECK(r.checked == model->params().scalar_count());
    for (auto& g : grads) g *= 1.01;
    CHECK(ad::gradient_check(loss, model->params(), 1e-5, &grads).max_rel_error > 1e-3);
  }
}

TEST_CASE("untied knowledge encoder adds parameters") {
  const std::vector<corpus::Tokens> seqs{{"a"}, {"b"}};
  auto cfg = tiny_config();
  auto tied = esim::make_model(esim::Variant::kesim, cfg, vocab_of(seqs));
  cfg.untie_knowledge_encoder = true;
  auto untied = esim::make_model(esim::Variant::kesim, cfg, vocab_of(seqs));
  CHECK(tied->params().count_prefix("knowledge_encoder") == 0);
  CHECK(untied->params().count_prefix("knowledge_encoder") > 0);
}
