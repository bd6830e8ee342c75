// SPDX-License-Identifier: Apache-2.0
//
// vdcnn_lab: corpus synthesis, feature extraction, training, evaluation,
// joint decoding, shape reports and gradient checks from the command line.
//
// Options may also come from an INI-style key=value file passed with
// --config; keys for a subcommand live under a [subcommand] section.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "vdcnn/arch.hpp"
#include "vdcnn/archive.hpp"
#include "vdcnn/corpus.hpp"
#include "vdcnn/experiment.hpp"
#include "vdcnn/gradsuite.hpp"
#include "vdcnn/train.hpp"

namespace fs = std::filesystem;
using namespace vdcnn;

namespace {

using KeyValues = std::map<std::string, std::string>;

std::string join(const std::vector<double>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt_double(v[i], 6);
  return s;
}

std::string read_text(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot open " + path);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw FormatError("cannot write " + path.string());
  os << text;
}

/// Creates <base>/<cmd>-<name>-<hash> and records the canonical config.
fs::path make_run_dir(const std::string& base, const std::string& cmd, const std::string& name,
                      const KeyValues& kv) {
  const fs::path dir = fs::path(base) / (cmd + "-" + name + "-" + config_hash(kv));
  fs::create_directories(dir);
  std::string listing;
  for (const auto& [k, v] : kv) listing += k + "=" + v + "\n";
  write_text(dir / "config.txt", listing);
  return dir;
}

FeatureArchives load_features(const fs::path& dir, const std::string& split) {
  FeatureArchives fa;
  const auto get = [&](const std::string& what) { return read_archive((dir / (split + "." + what + ".ark")).string()); };
  fa.fbank40 = get("fbank40");
  fa.fbank64 = get("fbank64");
  fa.mfcc = get("mfcc");
  fa.fmllr = get("fmllr");
  fa.ivector = get("ivector");
  return fa;
}

void save_features(const fs::path& dir, const std::string& split, const FeatureArchives& fa) {
  const auto put = [&](const std::string& what, const Archive& a) {
    write_archive((dir / (split + "." + what + ".ark")).string(), a);
  };
  put("fbank40", fa.fbank40);
  put("fbank64", fa.fbank64);
  put("mfcc", fa.mfcc);
  put("fmllr", fa.fmllr);
  put("ivector", fa.ivector);
}

ArchitectureSpec resolve_arch(const std::string& name_or_file, const CatalogOptions& opts) {
  if (fs::exists(name_or_file) && fs::is_regular_file(name_or_file))
    return parse_spec(read_text(name_or_file));
  return find_architecture(name_or_file, opts);
}

struct Common {
  std::string out = "runs";
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Very deep CNN acoustic-model laboratory"};
  app.set_config("--config", "", "INI file with key=value options under [subcommand] sections");
  app.require_subcommand(1);
  Common common;
  app.add_option("--out", common.out, "Base directory for run directories")->capture_default_str();

  // synth ------------------------------------------------------------------
  ToyCorpusConfig corpus;
  std::string corpus_name = "toy";
  bool write_wavs = false;
  auto* synth = app.add_subcommand("synth", "Synthesize the toy A/B/C/D corpus");
  synth->add_option("--name", corpus_name)->capture_default_str();
  synth->add_option("--classes", corpus.n_classes)->capture_default_str();
  synth->add_option("--train-utts", corpus.train_utterances)->capture_default_str();
  synth->add_option("--test-utts", corpus.test_utterances)->capture_default_str();
  synth->add_option("--min-frames", corpus.min_frames)->capture_default_str();
  synth->add_option("--max-frames", corpus.max_frames)->capture_default_str();
  synth->add_option("--speakers", corpus.n_speakers)->capture_default_str();
  synth->add_option("--snr", corpus.snr_db, "SNR values in dB (inf = no noise)")->capture_default_str();
  synth->add_option("--channel", corpus.channel_filter, "FIR channel taps")->capture_default_str();
  synth->add_option("--seed", corpus.seed)->capture_default_str();
  synth->add_flag("--wav", write_wavs, "Also write test utterances as 16-bit WAV files");

  // features ---------------------------------------------------------------
  std::string corpus_dir;
  std::uint64_t standin_seed = 11;
  auto* features = app.add_subcommand("features", "Extract FBANK / MFCC / auxiliary archives");
  features->add_option("--corpus", corpus_dir, "Run directory produced by synth")->required();
  features->add_option("--standin-seed", standin_seed, "Seed of the fMLLR / i-vector stand-ins")
      ->capture_default_str();

  // train ------------------------------------------------------------------
  SystemConfig sys;
  std::string model_type = "ffnet", arch = "vd6", aux_name = "fmllr+ivector", feat_dir;
  double scale = 1.0;
  auto* train = app.add_subcommand("train", "Train a system and evaluate it on the test split");
  train->add_option("--features", feat_dir, "Run directory produced by features")->required();
  train->add_option("--model", model_type, "ffnet | joint | lstmp")->capture_default_str();
  train->add_option("--arch", arch, "Catalog name or spec file")->capture_default_str();
  train->add_option("--aux", aux_name, "mfcc | fmllr | ivector | fmllr+ivector")->capture_default_str();
  train->add_option("--aux-hidden", sys.aux_hidden)->capture_default_str();
  train->add_option("--channel-base", sys.catalog.channel_base)->capture_default_str();
  train->add_option("--fc-width", sys.catalog.fc_width)->capture_default_str();
  train->add_option("--states", sys.catalog.n_states)->capture_default_str();
  train->add_option("--lr", sys.train.learning_rate)->capture_default_str();
  train->add_option("--momentum", sys.train.momentum)->capture_default_str();
  train->add_option("--batch", sys.train.batch)->capture_default_str();
  train->add_option("--epochs", sys.train.epochs)->capture_default_str();
  train->add_option("--seed", sys.seed)->capture_default_str();
  train->add_option("--cell-dim", sys.lstmp.cell_dim)->capture_default_str();
  train->add_option("--proj-dim", sys.lstmp.proj_dim)->capture_default_str();
  train->add_option("--lstm-layers", sys.lstmp.layers)->capture_default_str();
  train->add_flag("--peephole", sys.lstmp.peephole);
  train->add_flag("--speaker-aware", sys.speaker_aware, "Append the i-vector to LSTMP inputs");
  train->add_option("--chunk", sys.bptt.chunk)->capture_default_str();
  train->add_option("--parallel", sys.bptt.parallel_utterances)->capture_default_str();
  train->add_option("--delay", sys.bptt.output_delay)->capture_default_str();
  train->add_option("--scale", scale, "Acoustic scale for evaluation")->capture_default_str();

  // eval -------------------------------------------------------------------
  std::string ckpt_path;
  auto* eval = app.add_subcommand("eval", "Score and decode the test split with a checkpoint");
  eval->add_option("--features", feat_dir)->required();
  eval->add_option("--ckpt", ckpt_path)->required();
  eval->add_option("--scale", scale)->capture_default_str();

  // decode-joint -----------------------------------------------------------
  std::string ckpt2_path;
  double w1 = 0.6;
  auto* joint = app.add_subcommand("decode-joint", "State-level fusion of two systems");
  joint->add_option("--features", feat_dir)->required();
  joint->add_option("--ckpt1", ckpt_path)->required();
  joint->add_option("--ckpt2", ckpt2_path)->required();
  joint->add_option("--w1", w1, "Weight of system 1; system 2 gets 1 - w1")->capture_default_str();
  joint->add_option("--scale", scale)->capture_default_str();

  // shapes / export-spec ---------------------------------------------------
  std::string shape_target, export_target, export_file;
  CatalogOptions full_scale;
  auto* shapes = app.add_subcommand("shapes", "Print the layer-by-layer shape trace");
  shapes->add_option("arch", shape_target, "Catalog name or spec file")->required();
  shapes->add_option("--channel-base", full_scale.channel_base)->capture_default_str();
  shapes->add_option("--fc-width", full_scale.fc_width)->capture_default_str();
  shapes->add_option("--states", full_scale.n_states)->capture_default_str();
  auto* exp = app.add_subcommand("export-spec", "Write a catalog entry as a spec file");
  exp->add_option("arch", export_target)->required();
  exp->add_option("-o,--output", export_file, "Output file (stdout when omitted)");
  exp->add_option("--channel-base", full_scale.channel_base)->capture_default_str();
  exp->add_option("--fc-width", full_scale.fc_width)->capture_default_str();
  exp->add_option("--states", full_scale.n_states)->capture_default_str();

  // gradcheck --------------------------------------------------------------
  std::string scope = "all";
  GradSuiteOptions gopt;
  auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  grad->add_option("scope", scope, "all | " + [] {
    std::string s;
    for (const auto& x : GradSuite::scopes()) s += (s.empty() ? "" : " | ") + x;
    return s;
  }())->capture_default_str();
  grad->add_option("--instances", gopt.instances)->capture_default_str();
  grad->add_option("--tolerance", gopt.tolerance)->capture_default_str();
  grad->add_option("--seed", gopt.seed)->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed()) {
      const KeyValues kv{{"classes", std::to_string(corpus.n_classes)},
                         {"train_utts", std::to_string(corpus.train_utterances)},
                         {"test_utts", std::to_string(corpus.test_utterances)},
                         {"frames", std::to_string(corpus.min_frames) + ":" + std::to_string(corpus.max_frames)},
                         {"speakers", std::to_string(corpus.n_speakers)},
                         {"snr", join(corpus.snr_db)},
                         {"channel", join(corpus.channel_filter)},
                         {"seed", std::to_string(corpus.seed)}};
      const ToyCorpus c = synth_corpus(corpus);
      const fs::path dir = make_run_dir(common.out, "synth", corpus_name, kv);
      write_archive((dir / "train.wave.ark").string(), wave_archive(c.train));
      write_archive((dir / "test.wave.ark").string(), wave_archive(c.test));
      if (write_wavs) {
        fs::create_directories(dir / "wav");
        for (const auto& u : c.test) {
          Waveform w{corpus.sample_rate, u.samples};
          write_wav((dir / "wav" / (u.id + ".wav")).string(), w);
        }
      }
      std::cout << "train " << c.train.size() << " utterances, test " << c.test.size() << " utterances\n"
                << dir.string() << '\n';
      return 0;
    }

    if (features->parsed()) {
      const fs::path src(corpus_dir);
      const KeyValues kv{{"corpus", fs::absolute(src).lexically_normal().string()},
                         {"standin_seed", std::to_string(standin_seed)}};
      const fs::path dir = make_run_dir(common.out, "features", src.filename().string(), kv);
      for (const std::string split : {"train", "test"}) {
        const auto utts = from_wave_archive(read_archive((src / (split + ".wave.ark")).string()));
        save_features(dir, split, extract_features(utts, standin_seed));
        std::cout << split << ": " << utts.size() << " utterances\n";
      }
      std::cout << dir.string() << '\n';
      return 0;
    }

    if (train->parsed()) {
      if (model_type == "ffnet") sys.type = ModelType::kFeedForward;
      else if (model_type == "joint") sys.type = ModelType::kJoint;
      else if (model_type == "lstmp") sys.type = ModelType::kLstmp;
      else throw DomainError("unknown model type '" + model_type + "'");
      sys.lstmp.n_states = sys.catalog.n_states;
      if (sys.type != ModelType::kLstmp) sys.spec = resolve_arch(arch, sys.catalog);
      sys.aux = parse_aux_kind(aux_name);
      const fs::path src(feat_dir);
      const FeatureArchives tr = load_features(src, "train"), te = load_features(src, "test");
      KeyValues kv = sys.describe();
      kv["features"] = fs::absolute(src).lexically_normal().string();
      kv["scale"] = fmt_double(scale, 8);
      const fs::path dir = make_run_dir(common.out, "train", sys.name(), kv);
      std::ostringstream log;
      const auto sink = [&](std::size_t e, double ce, double h) {
        std::ostringstream line;
        line << "epoch " << e << "\ttrain_ce " << fmt_double(ce, 6) << "\theldout_ce " << fmt_double(h, 6) << '\n';
        std::cout << line.str() << std::flush;
        log << line.str();
      };
      TrainedSystem ts = train_system(sys, tr, &te, sink);
      ts.checkpoint.meta["config_hash"] = config_hash(kv);
      detail::spit((dir / "model.ckpt").string(), serialize_checkpoint(ts.checkpoint));
      write_text(dir / "train.log", log.str());
      std::vector<DecodedUtterance> dec;
      const RunReport rep = evaluate_system(ts.checkpoint, te, scale, &dec);
      write_text(dir / "report.txt", format_report(rep));
      write_text(dir / "decode.tsv", format_decodes(dec));
      std::cout << format_report(rep) << dir.string() << '\n';
      return 0;
    }

    if (eval->parsed()) {
      const Checkpoint ck = deserialize_checkpoint(detail::slurp(ckpt_path));
      const fs::path src(feat_dir);
      const FeatureArchives te = load_features(src, "test");
      const KeyValues kv{{"ckpt", ck.get("config_hash")},
                         {"features", fs::absolute(src).lexically_normal().string()},
                         {"scale", fmt_double(scale, 8)}};
      const fs::path dir = make_run_dir(common.out, "eval", ck.get("name"), kv);
      const ScoreSet scores = score_system(ck, te, scale);
      write_archive((dir / "scores.ark").string(), score_archive(scores));
      std::vector<DecodedUtterance> dec;
      RunReport rep = decode_and_score(ck.get("name"), scores, graph_for(ck), &dec);
      rep.config_hash = config_hash(kv);
      rep.seed = std::stoull(ck.get("seed"));
      write_text(dir / "report.txt", format_report(rep));
      write_text(dir / "decode.tsv", format_decodes(dec));
      std::cout << format_report(rep) << dir.string() << '\n';
      return 0;
    }

    if (joint->parsed()) {
      const Checkpoint c1 = deserialize_checkpoint(detail::slurp(ckpt_path));
      const Checkpoint c2 = deserialize_checkpoint(detail::slurp(ckpt2_path));
      const fs::path src(feat_dir);
      const FeatureArchives te = load_features(src, "test");
      const FusionWeights w(w1, 1.0 - w1);
      const JointDecodeResult r = run_joint_decode(c1, c2, te, w, scale);
      const KeyValues kv{{"ckpt1", c1.get("config_hash")}, {"ckpt2", c2.get("config_hash")},
                         {"features", fs::absolute(src).lexically_normal().string()},
                         {"w1", fmt_double(w.w1, 8)}, {"scale", fmt_double(scale, 8)}};
      const fs::path dir = make_run_dir(common.out, "decode-joint", c1.get("name") + "+" + c2.get("name"), kv);
      const std::string text = format_report(r.system1) + format_report(r.system2) + format_report(r.fused);
      write_text(dir / "report.txt", text);
      write_text(dir / "decode.tsv", format_decodes(r.fused_details));
      std::cout << text << dir.string() << '\n';
      return 0;
    }

    if (shapes->parsed()) {
      const ArchitectureSpec spec = resolve_arch(shape_target, full_scale);
      int rc = 0;
      try {
        std::cout << format_trace(spec, derive_shapes(spec));
      } catch (const Error& e) {
        std::cout << "shape derivation failed: " << e.what() << '\n';
        rc = 1;
      }
      const auto violations = validate(spec, full_scale.channel_base);
      for (const auto& v : violations) std::cout << "violation: " << format_violation(v) << '\n';
      return violations.empty() ? rc : 1;
    }

    if (exp->parsed()) {
      const std::string text = format_spec(resolve_arch(export_target, full_scale));
      if (export_file.empty()) std::cout << text;
      else write_text(export_file, text);
      return 0;
    }

    if (grad->parsed()) {
      const auto reports = GradSuite(gopt).run(scope);
      std::cout << format_grad_reports(reports);
      for (const auto& r : reports)
        if (!r.passed) return 1;
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
