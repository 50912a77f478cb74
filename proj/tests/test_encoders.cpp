#include <cmath>
#include <numeric>

#include "doctest.h"
#include "opatt/error.hpp"
#include "opatt/model.hpp"
#include "support.hpp"

using namespace opatt;

namespace {

struct Fixture {
  Example ex = testing::table1();
  Vocab vocab = testing::padded_vocab({ex}, 20, 8);
  ModelInput input = make_model_input(encode_example(ex, vocab), execute_all(ex.table), vocab);
  Model<double> model{testing::tiny_config(), vocab.size(), vocab.field_count()};

  Fixture() { testing::randomize(model, 3, 0.5); }

  Tensor<double>& param(const std::string& name) { return model.params()[model.params().find(name)].value; }
  void zero(const std::string& name) { std::fill(param(name).data.begin(), param(name).data.end(), 0.0); }
};

std::vector<double> row_of(const Tensor<double>& t, std::size_t r) {
  return {t.data.begin() + static_cast<std::ptrdiff_t>(r * t.shape.cols),
          t.data.begin() + static_cast<std::ptrdiff_t>((r + 1) * t.shape.cols)};
}

}  // namespace

TEST_CASE("embed_record concatenates row, field and value embeddings") {
  Fixture f;
  Graph<double> g(f.model.params());
  const IndexedRecord& r = f.input.records[4];  // (2, Points, 95)
  const auto v = g.value(f.model.embed_record(g, r)).data;
  std::vector<double> expected = row_of(f.param("emb.row"), r.row_id);
  for (double x : row_of(f.param("emb.field"), r.field_id)) expected.push_back(x);
  for (double x : row_of(f.param("emb.word"), r.value_id)) expected.push_back(x);
  CHECK(v == expected);
  CHECK(v.size() == 4 + 8 + 8);

  IndexedRecord other = r;
  other.row_id = 0;
  const auto w = g.value(f.model.embed_record(g, other)).data;
  for (std::size_t i = 4; i < v.size(); ++i) CHECK(w[i] == v[i]);
  CHECK(w != v);

  f.zero("emb.row");
  f.zero("emb.field");
  f.zero("emb.word");
  Graph<double> z(f.model.params());
  for (double x : z.value(f.model.embed_record(z, r)).data) CHECK(x == 0.0);

  Graph<double> h(f.model.params());
  IndexedRecord bad = r;
  bad.value_id = 1000;
  CHECK_THROWS_AS(f.model.embed_record(h, bad), IndexError);
}

TEST_CASE("encode_records") {
  Fixture f;
  Graph<double> g(f.model.params());
  const Var one = f.model.embed_record(g, f.input.records[0]);
  const auto single = f.model.encode_records(g, std::span<const Var>(&one, 1));
  CHECK(single.states.size() == 1);
  CHECK(g.shape(single.matrix) == Shape{16, 1});
  CHECK(g.shape(single.bridge) == Shape{16, 1});
  CHECK_THROWS_AS(f.model.encode_records(g, std::span<const Var>()), ContractError);

  std::vector<Var> vecs;
  for (const auto& r : f.input.records) vecs.push_back(f.model.embed_record(g, r));
  CHECK(g.shape(f.model.encode_records(g, vecs).matrix) == Shape{16, 6});

  // with shared direction weights, the backward half of state 1 equals the
  // forward half of the last state on the reversed sequence
  for (const char* part : {"wx", "wh", "b"}) f.param(std::string("enc.bwd.") + part) = f.param(std::string("enc.fwd.") + part);
  Graph<double> h(f.model.params());
  std::vector<Var> fwd, rev;
  for (const auto& r : f.input.records) fwd.push_back(f.model.embed_record(h, r));
  rev.assign(fwd.rbegin(), fwd.rend());
  const auto a = f.model.encode_records(h, fwd);
  const auto b = f.model.encode_records(h, rev);
  const auto s1 = h.value(a.states.front()).data;
  const auto sk = h.value(b.states.back()).data;
  for (std::size_t i = 0; i < 8; ++i) CHECK(s1[8 + i] == sk[i]);
}

TEST_CASE("zero inputs and zero weights give zero states") {
  Fixture f;
  for (auto& p : f.model.params()) std::fill(p.value.data.begin(), p.value.data.end(), 0.0);
  Graph<double> g(f.model.params());
  std::vector<Var> vecs;
  for (const auto& r : f.input.records) vecs.push_back(f.model.embed_record(g, r));
  for (double x : g.value(f.model.encode_records(g, vecs).matrix).data) CHECK(x == 0.0);
}

TEST_CASE("encode_op_args") {
  Fixture f;
  Graph<double> g(f.model.params());
  const OpInput all{OpKind::Argmax, 1, {}};
  const auto v = g.value(f.model.encode_op_args(g, all)).data;
  const auto& w = f.param("op.arg.wall");
  const auto e_all = row_of(f.param("emb.row"), 8);
  for (std::size_t i = 0; i < 8; ++i) {
    double acc = f.param("op.arg.b").data[i];
    for (std::size_t k = 0; k < 4; ++k) acc += w(i, k) * e_all[k];
    CHECK(v[i] == doctest::Approx(std::tanh(acc)).epsilon(1e-14));
  }

  const OpInput two{OpKind::Minus, 1, {0, 1}};
  const auto t = g.value(f.model.encode_op_args(g, two)).data;
  const auto e0 = row_of(f.param("emb.row"), 0), e1 = row_of(f.param("emb.row"), 1);
  for (std::size_t i = 0; i < 8; ++i) {
    double acc = f.param("op.arg.b").data[i];
    for (std::size_t k = 0; k < 4; ++k) acc += f.param("op.arg.w0")(i, k) * e0[k] + f.param("op.arg.w1")(i, k) * e1[k];
    CHECK(t[i] == doctest::Approx(std::tanh(acc)).epsilon(1e-14));
  }

  f.zero("op.arg.w0");
  f.zero("op.arg.w1");
  Graph<double> z(f.model.params());
  const auto zb = z.value(f.model.encode_op_args(z, two)).data;
  for (std::size_t i = 0; i < 8; ++i) CHECK(zb[i] == doctest::Approx(std::tanh(f.param("op.arg.b").data[i])));
}

TEST_CASE("encode_operation") {
  Fixture f;
  Graph<double> g(f.model.params());
  const OpInput minus{OpKind::Minus, 1, {0, 1}};
  CHECK(g.shape(f.model.encode_operation(g, minus)) == Shape{16, 1});
  f.zero("op.w");
  Graph<double> z(f.model.params());
  const auto v = z.value(f.model.encode_operation(z, minus)).data;
  for (std::size_t i = 0; i < v.size(); ++i) CHECK(v[i] == doctest::Approx(std::tanh(f.param("op.b").data[i])));
}

TEST_CASE("quantize_scalar") {
  Fixture f;
  f.zero("quant.w");
  f.zero("quant.b");
  {
    Graph<double> g(f.model.params());
    for (double x : g.value(f.model.quantize_scalar(g, 42.0).weights).data) CHECK(x == doctest::Approx(0.2));
  }
  testing::randomize(f.model, 8, 0.5);
  Graph<double> g(f.model.params());
  const auto q = f.model.quantize_scalar(g, -1.0);
  const auto mu = g.value(q.weights).data;
  CHECK(std::accumulate(mu.begin(), mu.end(), 0.0) == doctest::Approx(1.0).epsilon(1e-12));
  // h is the mu-weighted sum of the bin embeddings
  const auto& e = f.param("quant.emb");
  const auto h = g.value(q.state).data;
  for (std::size_t d = 0; d < h.size(); ++d) {
    double acc = 0.0;
    for (std::size_t l = 0; l < 5; ++l) acc += mu[l] * e(l, d);
    CHECK(h[d] == doctest::Approx(acc).epsilon(1e-12));
  }
  CHECK_THROWS_AS(f.model.quantize_scalar(g, std::nan("")), DomainError);
  CHECK_THROWS_AS(f.model.quantize_scalar(g, INFINITY), DomainError);
}

TEST_CASE("quantization weights are Lipschitz in the value") {
  Fixture f;
  double max_w = 0.0;
  for (double w : f.param("quant.w").data) max_w = std::max(max_w, std::abs(w));
  const double c = 2.0 * max_w;
  for (double v = -30.0; v <= 30.0; v += 0.7) {
    const double eps = 0.05;
    Graph<double> g(f.model.params());
    const auto a = g.value(f.model.quantize_scalar(g, v).weights).data;
    const auto b = g.value(f.model.quantize_scalar(g, v + eps).weights).data;
    double l1 = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l) l1 += std::abs(a[l] - b[l]);
    CHECK(l1 <= c * eps + 1e-12);
  }
}

TEST_CASE("encode_index_result") {
  Fixture f;
  Graph<double> g(f.model.params());
  const Var a = f.model.encode_index_result(g, 1), b = f.model.encode_index_result(g, 1);
  CHECK(g.value(a).data == g.value(b).data);
  CHECK(g.shape(f.model.encode_index_result(g, 1)) == Shape{16, 1});
  f.zero("emb.row");
  Graph<double> z(f.model.params());
  for (double x : z.value(f.model.encode_index_result(z, 1)).data) CHECK(x == 0.0);
  CHECK_THROWS_AS(f.model.encode_index_result(z, 99), IndexError);
}

TEST_CASE("encode groups results by type") {
  Fixture f;
  Graph<double> g(f.model.params());
  const auto enc = f.model.encode(g, f.input);
  CHECK(g.shape(enc.record_states) == Shape{16, 6});
  CHECK(g.shape(enc.scalar_values) == Shape{16, 2});
  CHECK(g.shape(enc.index_values) == Shape{16, 2});
  CHECK(enc.quantized.size() == 2);

  ModelConfig no_argmax = testing::tiny_config();
  no_argmax.no_argmax = true;
  Model<double> m(no_argmax, f.vocab.size(), f.vocab.field_count());
  m.init(1);
  Graph<double> h(m.params());
  const auto e2 = m.encode(h, f.input);
  CHECK_FALSE(e2.index_keys.valid());
  CHECK(e2.scalar_keys.valid());

  ModelConfig records = testing::tiny_config();
  records.ops_as_records = true;
  Model<double> r(records, f.vocab.size(), f.vocab.field_count());
  r.init(1);
  Graph<double> k(r.params());
  const auto e3 = r.encode(k, f.input);
  CHECK(k.shape(e3.record_states) == Shape{16, 10});
  CHECK(k.shape(e3.copy_states) == Shape{16, 6});
  CHECK_FALSE(e3.scalar_keys.valid());

  // scalar results come first, so no_argmax drops exactly the index ones
  REQUIRE(f.input.result_records.size() == 4);
  CHECK(f.input.result_records[0].row_id == f.vocab.all_row_id());
  CHECK(f.input.result_records[1].row_id == f.vocab.all_row_id());
  CHECK(f.input.result_records[2].row_id == 1);
  records.no_argmax = true;
  Model<double> ra(records, f.vocab.size(), f.vocab.field_count());
  ra.init(1);
  Graph<double> l(ra.params());
  CHECK(l.shape(ra.encode(l, f.input).record_states) == Shape{16, 8});
}

TEST_CASE("initialization") {
  ModelConfig paper;
  Model<float> a(paper, 100, 5), b(paper, 100, 5);
  a.init(17);
  b.init(17);
  for (std::size_t i = 0; i < a.params().size(); ++i) CHECK(a.params().at(i).value.data == b.params().at(i).value.data);

  const auto& w = a.params()[a.params().find("enc.bridge.w")].value;
  REQUIRE(w.shape == Shape{512, 512});
  double sum = 0.0, sq = 0.0;
  for (float x : w.data) {
    sum += x;
    sq += static_cast<double>(x) * x;
  }
  const double n = static_cast<double>(w.size());
  const double sd = std::sqrt(sq / n - (sum / n) * (sum / n));
  const double sigma = std::sqrt(6.0 / 1024.0);
  CHECK(std::abs(sd - sigma) / sigma < 0.05);
  for (const char* bias : {"dec.b", "gate.b", "ptr.b", "vocab.b", "quant.w", "quant.b"}) {
    for (float x : a.params()[a.params().find(bias)].value.data) CHECK(x == 0.0f);
  }
}
