#include <CLI11.hpp>

#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>

#include "kmerspace/analysis.hpp"
#include "kmerspace/autodiff/checkpoint.hpp"
#include "kmerspace/contrastive.hpp"
#include "kmerspace/heads.hpp"
#include "kmerspace/mapper.hpp"
#include "kmerspace/noise.hpp"
#include "kmerspace/run_config.hpp"

using namespace kmerspace;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Options {
  std::string config, fasta, reads, checkpoint, out, mapping, head;
  std::optional<std::uint64_t> seed, iterations;
  std::optional<std::size_t> window;
  std::optional<std::uint32_t> base;
  std::optional<double> gamma;
  std::string mode;
  long long n = 0;
  bool noiseless = false;
  std::size_t stride = 1, knn_k = 10, background_n = 5000;
};

RunConfig resolve_config(const Options& o) {
  RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
  if (o.seed) cfg.seed = *o.seed;
  if (o.iterations) {
    cfg.train.iterations = *o.iterations;
    cfg.head_train.iterations = *o.iterations;
    cfg.train.warmup = std::min(cfg.train.warmup, *o.iterations);
    cfg.head_train.warmup = std::min(cfg.head_train.warmup, *o.iterations);
  }
  if (o.window) cfg.window = *o.window;
  if (o.base) cfg.head.base = *o.base;
  if (o.gamma) cfg.loss.gamma = *o.gamma;
  if (!o.mode.empty()) cfg.loss.mode = parse_loss_mode(o.mode);
  if (!o.head.empty()) cfg.head.kind = parse_head_kind(o.head);
  cfg.resolve();
  cfg.validate();
  return cfg;
}

void require(const std::string& value, const std::string& flag) {
  if (value.empty()) throw UsageError(flag + " is required");
}

Genome load_genome(const std::string& path) {
  auto gs = read_fasta_file(path, NPolicy::mask);
  if (gs.empty()) throw std::runtime_error("no sequences in '" + path + "'");
  if (gs.size() > 1) std::cerr << "warning: using the first of " << gs.size() << " FASTA records\n";
  return std::move(gs.front());
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  return out;
}

void echo_config(const Options& o, const RunConfig& cfg) { save_run_config(o.out + ".config.ini", cfg); }

int train_encoder_cmd(const Options& o) {
  if (o.reads.empty()) require(o.fasta, "--fasta");
  require(o.out, "--out");
  RunConfig cfg = resolve_config(o);
  std::optional<ReadSet> reads;
  std::optional<Genome> g;
  TrainingSource src;
  if (!o.reads.empty()) {
    if (cfg.loss.mode == LossMode::supervised)
      throw UsageError("--reads trains from unlabeled reads and needs --mode selfsup");
    reads = read_reads_tsv_file(o.reads);
    src = &*reads;
  } else {
    g = load_genome(o.fasta);
    src = &*g;
  }
  TrainConfig tc = cfg.train;
  tc.checkpoint_path = o.out;
  auto res = train_encoder(src, cfg.encoder, cfg.loss, cfg.augment, tc, [](const LossRecord& r) {
    if (r.step % 100 == 0) std::cerr << "step " << r.step << " loss " << r.loss << '\n';
  });
  ad::save_checkpoint(o.out, res.model.to_checkpoint());
  auto csv = open_out(o.out + ".loss.csv");
  write_loss_csv(csv, res.history);
  echo_config(o, cfg);
  return 0;
}

int train_head_cmd(const Options& o) {
  require(o.fasta, "--fasta");
  require(o.checkpoint, "--checkpoint");
  require(o.out, "--out");
  RunConfig cfg = resolve_config(o);
  const Genome g = load_genome(o.fasta);
  const ad::Checkpoint enc_ck = ad::load_checkpoint(o.checkpoint).filtered("encoder.");
  const std::uint64_t before = ad::fingerprint(enc_ck);
  const EncoderModel enc = EncoderModel::from_checkpoint(enc_ck);
  enc.set_trainable(false);
  HeadConfig hc = cfg.head;
  hc.L = g.length();
  auto res = train_head(enc, hc, g, cfg.augment, cfg.head_train, [](const LossRecord& r) {
    if (r.step % 100 == 0) std::cerr << "step " << r.step << " loss " << r.loss << '\n';
  });
  ad::Checkpoint out = enc.to_checkpoint();
  if (ad::fingerprint(out) != before) throw std::runtime_error("encoder weights changed during head training");
  out.merge(res.head.to_checkpoint());
  ad::save_checkpoint(o.out, out);
  auto csv = open_out(o.out + ".loss.csv");
  write_loss_csv(csv, res.history);
  echo_config(o, cfg);
  return 0;
}

int simulate_cmd(const Options& o) {
  require(o.fasta, "--fasta");
  require(o.out, "--out");
  if (o.n <= 0) throw UsageError("--n must be a positive read count");
  RunConfig cfg = resolve_config(o);
  const Genome g = load_genome(o.fasta);
  const DamageConfig dc = o.noiseless ? DamageConfig::noiseless(cfg.damage.fragment_len) : cfg.damage;
  write_reads_tsv_file(o.out, simulate_reads(g, o.n, dc, derive_seed(cfg.seed, "simulate-reads")));
  echo_config(o, cfg);
  return 0;
}

int map_cmd(const Options& o) {
  require(o.fasta, "--fasta");
  require(o.checkpoint, "--checkpoint");
  require(o.reads, "--reads");
  require(o.out, "--out");
  RunConfig cfg = resolve_config(o);
  const Genome g = load_genome(o.fasta);
  const ad::Checkpoint ck = ad::load_checkpoint(o.checkpoint);
  const EncoderModel enc = EncoderModel::from_checkpoint(ck);
  const PositionHead head = PositionHead::from_checkpoint(ck, cfg.head.kind);
  if (head.config().L != g.length())
    throw std::runtime_error("head was trained on a genome of length " + std::to_string(head.config().L) +
                             ", this one has " + std::to_string(g.length()));
  const ReadSet rs = read_reads_tsv_file(o.reads);
  auto out = open_out(o.out);
  write_mapping_tsv(out, map_reads(rs, g, enc, head, cfg.window));
  echo_config(o, cfg);
  return 0;
}

int eval_cmd(const Options& o) {
  require(o.mapping, "--mapping");
  require(o.reads, "--reads");
  std::ifstream in(o.mapping, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open mapping file '" + o.mapping + "'");
  const auto records = read_mapping_tsv(in);
  const ReadSet truth = read_reads_tsv_file(o.reads);
  const MappingEvaluation ev = evaluate_mapping(records, truth);
  if (ev.n == 0) {
    std::cout << "accuracy=undefined (no reads)\n";
    return 0;
  }
  std::cout << "accuracy=" << std::fixed << std::setprecision(4) << ev.accuracy << '\n';
  std::cout << "mapped_exact=" << ev.exact << " total=" << ev.n << '\n';
  if (!o.out.empty()) {
    auto csv = open_out(o.out);
    write_ecdf_csv(csv, ecdf(ev.errors, default_ecdf_thresholds(ev.errors)));
  }
  return 0;
}

int embed_cmd(const Options& o) {
  require(o.fasta, "--fasta");
  require(o.checkpoint, "--checkpoint");
  require(o.out, "--out");
  RunConfig cfg = resolve_config(o);
  const Genome g = load_genome(o.fasta);
  const EncoderModel enc = EncoderModel::from_checkpoint(ad::load_checkpoint(o.checkpoint));
  auto out = open_out(o.out);
  write_embedding_csv(out, build_index(enc, g, o.stride));
  echo_config(o, cfg);
  return 0;
}

int pca_cmd(const Options& o) {
  require(o.fasta, "--fasta");
  require(o.checkpoint, "--checkpoint");
  require(o.out, "--out");
  RunConfig cfg = resolve_config(o);
  const Genome g = load_genome(o.fasta);
  const EncoderModel enc = EncoderModel::from_checkpoint(ad::load_checkpoint(o.checkpoint));
  const EmbeddingIndex idx = build_index(enc, g, o.stride);
  const Pca2 p = pca2(idx.Z);
  std::cout << "explained_variance=" << p.explained[0] << ',' << p.explained[1] << '\n';
  auto out = open_out(o.out);
  write_pca_csv(out, p, idx.coords);
  echo_config(o, cfg);
  return 0;
}

int knn_stats_cmd(const Options& o) {
  require(o.fasta, "--fasta");
  require(o.checkpoint, "--checkpoint");
  require(o.out, "--out");
  RunConfig cfg = resolve_config(o);
  const Genome g = load_genome(o.fasta);
  const EncoderModel enc = EncoderModel::from_checkpoint(ad::load_checkpoint(o.checkpoint));
  const EmbeddingIndex idx = build_index(enc, g, o.stride);
  const auto stats = mean_knn_genomic_distance(idx, o.knn_k);
  const auto base =
      random_embedding_baseline(idx.coords, idx.Z.cols, o.knn_k, derive_seed(cfg.seed, "knn-baseline"));
  std::cout << "median=" << stats.median << " baseline_median=" << base.median << '\n';
  auto out = open_out(o.out);
  write_knn_stats_csv(out, stats, idx.coords);
  echo_config(o, cfg);
  return 0;
}

int detect_inversions_cmd(const Options& o) {
  require(o.fasta, "--fasta");
  require(o.checkpoint, "--checkpoint");
  require(o.reads, "--reads");
  require(o.out, "--out");
  RunConfig cfg = resolve_config(o);
  const Genome g = load_genome(o.fasta);
  const ad::Checkpoint ck = ad::load_checkpoint(o.checkpoint);
  const EncoderModel enc = EncoderModel::from_checkpoint(ck);
  const PositionHead head = PositionHead::from_checkpoint(ck, cfg.head.kind);
  const ReadSet rs = read_reads_tsv_file(o.reads);
  if (rs.reads.empty()) throw std::runtime_error("no reads in '" + o.reads + "'");
  DamageConfig dc = cfg.damage;
  dc.fragment_len = rs.reads.front().sequence.size();
  const ReadSet bg = simulate_reads(g, static_cast<long long>(o.background_n), dc,
                                    derive_seed(cfg.seed, "inversion-background"));
  const InversionReport rep = inversion_scan(rs, bg, g, enc, head, cfg.inversion);
  for (const auto& iv : rep.intervals)
    std::cout << "interval=" << iv.start << '-' << iv.end << " support=" << iv.support << '\n';
  std::cout << "intervals=" << rep.intervals.size() << " threshold=" << rep.threshold << '\n';
  auto out = open_out(o.out);
  write_inversion_reads_csv(out, rep);
  auto ivs = open_out(o.out + ".intervals.csv");
  write_inversion_intervals_csv(ivs, rep);
  auto qs = open_out(o.out + ".background.csv");
  write_background_quantiles_csv(qs, rep);
  echo_config(o, cfg);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"k-mer embedding, position heads and read mapping"};
  app.require_subcommand(1);
  Options o;

  auto common = [&](CLI::App* sub) {
    sub->add_option("--config", o.config, "INI run configuration");
    sub->add_option("--seed", o.seed, "master seed");
    sub->add_option("--out", o.out, "output path");
  };
  auto model = [&](CLI::App* sub) {
    sub->add_option("--fasta", o.fasta, "reference FASTA");
    sub->add_option("--checkpoint", o.checkpoint, "model checkpoint");
  };

  auto* te = app.add_subcommand("train-encoder", "contrastive encoder training");
  common(te);
  te->add_option("--fasta", o.fasta, "reference FASTA");
  te->add_option("--reads", o.reads, "reads TSV for self-supervised training");
  te->add_option("--iterations", o.iterations);
  te->add_option("--gamma", o.gamma, "coordinate threshold in bp");
  te->add_option("--mode", o.mode, "supervised or selfsup")->check(CLI::IsMember({"supervised", "selfsup"}));

  auto* th = app.add_subcommand("train-head", "position head on a frozen encoder");
  common(th);
  model(th);
  th->add_option("--iterations", o.iterations);
  th->add_option("--head", o.head, "mse, cce or gpt")->check(CLI::IsMember({"mse", "cce", "gpt"}));
  th->add_option("--base", o.base, "digit base");

  auto* sim = app.add_subcommand("simulate-reads", "damaged reads with true coordinates");
  common(sim);
  sim->add_option("--fasta", o.fasta, "reference FASTA");
  sim->add_option("--n", o.n, "number of reads");
  sim->add_flag("--noiseless", o.noiseless, "exact substrings");

  auto* mp = app.add_subcommand("map", "head prediction plus local alignment");
  common(mp);
  model(mp);
  mp->add_option("--reads", o.reads, "reads TSV");
  mp->add_option("--window", o.window, "alignment window in bp");
  mp->add_option("--head", o.head, "mse, cce or gpt")->check(CLI::IsMember({"mse", "cce", "gpt"}));

  auto* ev = app.add_subcommand("eval", "accuracy and error eCDF of a mapping");
  ev->add_option("--mapping", o.mapping, "mapping TSV");
  ev->add_option("--reads", o.reads, "reads TSV with true coordinates");
  ev->add_option("--out", o.out, "eCDF CSV");

  auto* em = app.add_subcommand("embed", "embedding of every k-mer");
  common(em);
  model(em);
  em->add_option("--stride", o.stride);

  auto* pc = app.add_subcommand("pca", "2D PCA of the embedding");
  common(pc);
  model(pc);
  pc->add_option("--stride", o.stride);

  auto* ks = app.add_subcommand("knn-stats", "mean genomic distance to embedding neighbors");
  common(ks);
  model(ks);
  ks->add_option("--stride", o.stride);
  ks->add_option("--k", o.knn_k, "neighbors per k-mer");

  auto* di = app.add_subcommand("detect-inversions", "end-pair embedding distance scan");
  common(di);
  model(di);
  di->add_option("--reads", o.reads, "reads TSV");
  di->add_option("--head", o.head, "mse, cce or gpt")->check(CLI::IsMember({"mse", "cce", "gpt"}));
  di->add_option("--background-n", o.background_n, "simulated background reads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*te) return train_encoder_cmd(o);
    if (*th) return train_head_cmd(o);
    if (*sim) return simulate_cmd(o);
    if (*mp) return map_cmd(o);
    if (*ev) return eval_cmd(o);
    if (*em) return embed_cmd(o);
    if (*pc) return pca_cmd(o);
    if (*ks) return knn_stats_cmd(o);
    if (*di) return detect_inversions_cmd(o);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const ConfigError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}
