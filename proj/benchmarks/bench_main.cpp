#include <benchmark/benchmark.h>

#include <numeric>

#include "match/autodiff.hpp"
#include "match/classifier.hpp"
#include "match/encoder.hpp"
#include "match/metrics.hpp"
#include "match/sphere_embed.hpp"
#include "match/synthetic.hpp"

namespace {

using namespace match;

ad::Tensor random_tensor(Eigen::Index r, Eigen::Index c, Rng& rng) {
  ad::Tensor t(r, c);
  for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.normal();
  return t;
}

struct World {
  Corpus corpus;
  LabelHierarchy hierarchy;
  std::vector<std::size_t> docs;
};

const World& world() {
  static const World w = [] {
    World out;
    auto data = generate_synthetic({.num_documents = 500}, 1);
    auto vocab = build_vocabulary(data.corpus, 1, &data.hierarchy);
    out.corpus = resolve(data.corpus, vocab, &data.hierarchy);
    out.hierarchy = data.hierarchy;
    out.docs.resize(out.corpus.documents.size());
    std::iota(out.docs.begin(), out.docs.end(), 0);
    return out;
  }();
  return w;
}

void BM_MatmulForwardBackward(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(1);
  ad::Parameter a("a", random_tensor(n, n, rng));
  ad::Parameter b("b", random_tensor(n, n, rng));
  for (auto _ : state) {
    a.zero_grad();
    b.zero_grad();
    ad::Tape tape;
    auto loss = ad::sum(ad::matmul(tape.leaf(a), tape.leaf(b)));
    tape.backward(loss);
    benchmark::DoNotOptimize(a.grad.data());
  }
}
BENCHMARK(BM_MatmulForwardBackward)->Arg(16)->Arg(64)->Arg(128);

void BM_EncodeDocument(benchmark::State& state) {
  const auto& w = world();
  encoder::EncoderConfig cfg;
  cfg.dim = static_cast<std::size_t>(state.range(0));
  cfg.max_length = 64;
  Rng rng(2);
  auto params = encoder::EncoderParams::initialize(cfg, w.corpus.vocabulary, nullptr, rng);
  std::size_t i = 0;
  for (auto _ : state) {
    ad::Tape tape;
    auto rep = encoder::encode_document(tape, w.corpus.documents[i++ % w.docs.size()], params, cfg);
    benchmark::DoNotOptimize(rep.value().data());
  }
}
BENCHMARK(BM_EncodeDocument)->Arg(16)->Arg(100);

void BM_TrainingStep(benchmark::State& state) {
  const auto& w = world();
  Model model;
  model.config.dim = 16;
  model.config.max_length = 64;
  Rng rng(3);
  model.encoder = encoder::EncoderParams::initialize(model.config, w.corpus.vocabulary, nullptr, rng);
  model.head = PredictionHead::random(model.config.output_dim(), w.corpus.num_labels(), rng);
  TrainConfig cfg;
  std::vector<const Document*> batch;
  for (std::size_t i = 0; i < 32; ++i) batch.push_back(&w.corpus.documents[i]);
  auto params = model.parameters();
  for (auto _ : state) {
    for (auto* p : params) p->zero_grad();
    ad::Tape tape;
    auto parts = total_objective(tape, model, batch, w.hierarchy, cfg, &rng);
    tape.backward(parts.total);
    benchmark::DoNotOptimize(parts.total.scalar());
  }
  state.SetItemsProcessed(state.iterations() * 32);
}
BENCHMARK(BM_TrainingStep)->Unit(benchmark::kMillisecond);

void BM_PretrainUpdates(benchmark::State& state) {
  const auto& w = world();
  sphere::PretrainConfig cfg;
  cfg.dim = static_cast<std::size_t>(state.range(0));
  cfg.epochs = 1;
  cfg.iterations_per_epoch = 10000;
  for (auto _ : state) {
    auto result = sphere::pretrain(w.corpus, w.docs, cfg);
    benchmark::DoNotOptimize(result.updates);
  }
  state.SetItemsProcessed(state.iterations() * 10000);
}
BENCHMARK(BM_PretrainUpdates)->Arg(16)->Arg(100)->Unit(benchmark::kMillisecond);

void BM_NdcgAt5(benchmark::State& state) {
  Rng rng(4);
  std::vector<std::vector<LabelId>> truths, rankings;
  for (int d = 0; d < 1000; ++d) {
    std::vector<LabelId> all(30);
    std::iota(all.begin(), all.end(), 0);
    rng.shuffle(all);
    truths.emplace_back(all.begin(), all.begin() + 3);
    rng.shuffle(all);
    rankings.emplace_back(all.begin(), all.begin() + 5);
  }
  for (auto _ : state) {
    auto report = evaluate_rankings(truths, rankings);
    benchmark::DoNotOptimize(report.ndcg5);
  }
  state.SetItemsProcessed(state.iterations() * 1000);
}
BENCHMARK(BM_NdcgAt5);

}  // namespace

BENCHMARK_MAIN();
