// kamir: end-to-end pipeline around awareness-vector extraction, the
// familiar/unfamiliar classifier, split selection, LoRA SFT and reporting.
//
// Exit codes: 0 success, 1 usage error, 2 data/format error, 3 internal
// invariant violation.

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "kamir/awareness.hpp"
#include "kamir/classifier.hpp"
#include "kamir/errors.hpp"
#include "kamir/lora.hpp"
#include "kamir/minilm.hpp"
#include "kamir/report.hpp"
#include "kamir/selection.hpp"
#include "kamir/sha256.hpp"

namespace fs = std::filesystem;
using namespace kamir;

namespace {

std::string g9(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path);
  out << text;
}

fs::path ensure_out_dir(const std::string& out) {
  fs::path dir(out);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (!fs::is_directory(dir)) throw DataError("cannot create output directory " + out);
  return dir;
}

// The resolved configuration (flags merged over config-file values) is echoed
// into the output directory so every artifact records how it was produced.
void echo_config(const fs::path& dir, const std::string& section,
                 const std::vector<std::pair<std::string, std::string>>& kv) {
  std::string text = "[" + section + "]\n";
  for (const auto& [k, v] : kv) text += k + " = " + v + "\n";
  write_text((dir / "resolved.cfg").string(), text);
}

struct ModelFlags {
  std::uint32_t layers = 4, dim = 64, heads = 4, ffn = 256, max_seq = 512;

  LmConfig to_config(std::uint64_t seed) const {
    LmConfig cfg;
    cfg.n_layers = layers;
    cfg.hidden_dim = dim;
    cfg.n_heads = heads;
    cfg.ffn_dim = ffn;
    cfg.max_seq_len = max_seq;
    cfg.seed = seed;
    return cfg;
  }
};

TraceAnchor parse_anchor(const std::string& s) {
  if (s == "pre_final_norm") return TraceAnchor::pre_final_norm;
  if (s == "post_final_norm") return TraceAnchor::post_final_norm;
  throw DataError("unknown anchor '" + s + "'");
}

MeanMode parse_mean(const std::string& s) {
  if (s == "uniform") return MeanMode::uniform;
  if (s == "token_weighted") return MeanMode::token_weighted;
  throw DataError("unknown mean mode '" + s + "'");
}

// ------------------------------------------------------------------ pretrain

struct PretrainArgs {
  std::string corpus, out;
  std::size_t steps = 2000;
  double lr = 1e-3;
  std::uint64_t seed = 1;
  ModelFlags model;
};

void run_pretrain(const PretrainArgs& a) {
  const fs::path dir = ensure_out_dir(a.out);
  const Corpus corpus = ingest_corpus(a.corpus);

  std::vector<std::vector<TokenId>> sequences;
  sequences.reserve(corpus.docs.size());
  for (const auto& doc : corpus.docs) sequences.push_back(encode(doc.text));

  MiniLmModel model(a.model.to_config(a.seed));
  PretrainOptions opt;
  opt.steps = a.steps;
  opt.lr = static_cast<float>(a.lr);
  SeededRng rng(a.seed);
  std::vector<double> curve;
  if (a.steps > 0) curve = pretrain(model, sequences, opt, rng);

  save_checkpoint(model, (dir / "model.kamlm").string());
  std::string csv = "step,loss\n";
  for (std::size_t i = 0; i < curve.size(); ++i)
    csv += std::to_string(i) + "," + g9(curve[i]) + "\n";
  write_text((dir / "loss_curve.csv").string(), csv);

  echo_config(dir, "pretrain",
              {{"corpus", a.corpus},
               {"out", a.out},
               {"steps", std::to_string(a.steps)},
               {"lr", g9(a.lr)},
               {"seed", std::to_string(a.seed)},
               {"layers", std::to_string(a.model.layers)},
               {"dim", std::to_string(a.model.dim)},
               {"heads", std::to_string(a.model.heads)},
               {"ffn", std::to_string(a.model.ffn)},
               {"max_seq", std::to_string(a.model.max_seq)}});
  std::cout << "pretrained " << a.steps << " steps on " << corpus.docs.size()
            << " docs; checkpoint at " << (dir / "model.kamlm").string() << "\n";
}

// ------------------------------------------------------------------- extract

struct ExtractArgs {
  std::string model, corpus, traces, out;
  std::size_t chunk_len = 300, max_output = 100;
  std::string mean = "uniform", anchor = "pre_final_norm";
  unsigned threads = 1;
};

void parallel_extract(const MiniLmModel& model, const std::vector<CorpusDocument>& docs,
                      std::size_t chunk_len, std::size_t max_output, MeanMode mode,
                      TraceAnchor anchor, unsigned threads, std::vector<LabeledAwareness>& rows) {
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex err_mutex;
  auto work = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= docs.size()) return;
      try {
        LabeledAwareness row;
        row.vec = document_awareness(model, docs[i].id, docs[i].text, chunk_len, max_output, mode,
                                     anchor);
        rows[i] = std::move(row);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mutex);
        if (!error) error = std::current_exception();
        return;
      }
    }
  };
  if (threads <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (unsigned w = 0; w < threads; ++w) pool.emplace_back(work);
    for (auto& t : pool) t.join();
  }
  if (error) std::rethrow_exception(error);
}

void run_extract(const ExtractArgs& a) {
  const fs::path dir = ensure_out_dir(a.out);
  std::vector<LabeledAwareness> rows;

  std::map<std::string, AwLabel> gold;
  std::optional<Corpus> corpus;
  if (!a.corpus.empty()) {
    corpus = ingest_corpus(a.corpus);
    for (const auto& doc : corpus->docs)
      if (doc.gold_label) gold[doc.id] = *doc.gold_label;
  }

  if (!a.traces.empty()) {
    // Import mode: externally produced hidden states, no model involved.
    const auto traces = import_traces(a.traces);
    for (const auto& tr : traces) {
      LabeledAwareness row;
      row.vec = awareness_from_trace(tr);
      row.vec.source = AwarenessSource::imported_trace;
      const auto it = gold.find(row.vec.doc_id);
      row.label = it == gold.end() ? AwLabel::unlabeled : it->second;
      rows.push_back(std::move(row));
    }
  } else {
    if (a.model.empty() || !corpus)
      throw DataError("extract: need --model and --corpus, or --traces");
    const MiniLmModel model = load_checkpoint(a.model);
    const MeanMode mode = parse_mean(a.mean);
    const TraceAnchor anchor = parse_anchor(a.anchor);
    rows.resize(corpus->docs.size());
    const auto& docs = corpus->docs;
    parallel_extract(model, docs, a.chunk_len, a.max_output, mode, anchor, a.threads, rows);
    for (std::size_t i = 0; i < docs.size(); ++i)
      rows[i].label = docs[i].gold_label.value_or(AwLabel::unlabeled);
  }

  write_awareness_csv(rows, (dir / "awareness.csv").string());
  echo_config(dir, "extract",
              {{"model", a.model},
               {"corpus", a.corpus},
               {"traces", a.traces},
               {"out", a.out},
               {"chunk_len", std::to_string(a.chunk_len)},
               {"max_output", std::to_string(a.max_output)},
               {"mean", a.mean},
               {"anchor", a.anchor},
               {"threads", std::to_string(a.threads)}});
  std::cout << "wrote " << rows.size() << " awareness vectors to "
            << (dir / "awareness.csv").string() << "\n";
}

// ----------------------------------------------------------------- train-clf

struct TrainClfArgs {
  std::string csv, out;
  std::uint32_t hidden = 64, epochs = 200, batch = 32;
  double lr = 1e-3, threshold = 0.5;
  std::uint64_t seed = 1;
};

void run_train_clf(const TrainClfArgs& a) {
  const fs::path dir = ensure_out_dir(a.out);
  const auto rows = read_awareness_csv(a.csv);
  std::vector<LabeledVector> data;
  for (const auto& row : rows) {
    if (row.label == AwLabel::unlabeled) continue;
    data.push_back({row.vec.values, row.label == AwLabel::unfamiliar ? 1 : 0});
  }
  if (data.size() < rows.size())
    std::cout << "skipping " << rows.size() - data.size() << " unlabeled rows\n";

  ClassifierHyper hyper;
  hyper.hidden = {a.hidden};
  hyper.epochs = a.epochs;
  hyper.lr = static_cast<float>(a.lr);
  hyper.batch = a.batch;
  hyper.seed = a.seed;
  hyper.threshold = static_cast<float>(a.threshold);
  std::vector<double> history;
  const auto clf = train_classifier(data, hyper, &history);

  save_classifier(clf, (dir / "classifier.kamclf").string());
  std::string csv = "epoch,loss\n";
  for (std::size_t i = 0; i < history.size(); ++i)
    csv += std::to_string(i) + "," + g9(history[i]) + "\n";
  write_text((dir / "train_log.csv").string(), csv);

  const auto ev = evaluate(clf, data);
  echo_config(dir, "train-clf",
              {{"csv", a.csv},
               {"out", a.out},
               {"hidden", std::to_string(a.hidden)},
               {"epochs", std::to_string(a.epochs)},
               {"lr", g9(a.lr)},
               {"batch", std::to_string(a.batch)},
               {"threshold", g9(a.threshold)},
               {"seed", std::to_string(a.seed)}});
  std::cout << "trained on " << data.size() << " vectors; train accuracy " << g9(ev.accuracy)
            << ", AUC " << (ev.auc ? g9(*ev.auc) : std::string("undefined")) << "\n";
}

// ------------------------------------------------------------------ classify

struct ClassifyArgs {
  std::string clf, csv, out;
};

void run_classify(const ClassifyArgs& a) {
  const fs::path dir = ensure_out_dir(a.out);
  const auto clf = load_classifier(a.clf);
  const auto rows = read_awareness_csv(a.csv);
  if (!rows.empty() && rows.front().vec.values.size() != clf.input_dim())
    throw DataError("classify: CSV has K = " + std::to_string(rows.front().vec.values.size()) +
                    " but the classifier expects " + std::to_string(clf.input_dim()));

  std::string out = "doc_id,label,probability\n";
  for (const auto& row : rows) {
    const auto pred = classify(clf, row.vec.values);
    out += row.vec.doc_id + "," + std::string(to_string(pred.label)) + "," +
           g9(pred.probability) + "\n";
  }
  write_text((dir / "predictions.csv").string(), out);
  echo_config(dir, "classify", {{"clf", a.clf}, {"csv", a.csv}, {"out", a.out}});
  std::cout << "classified " << rows.size() << " vectors\n";
}

// -------------------------------------------------------------------- select

struct SelectArgs {
  std::string model, clf, corpus, out;
  std::uint64_t seed = 1;
  std::optional<std::size_t> random_size;
  std::size_t chunk_len = 300, max_output = 100;
  std::string mean = "uniform", anchor = "pre_final_norm";
  unsigned threads = 1;
};

int run_select(const SelectArgs& a) {
  const fs::path dir = ensure_out_dir(a.out);
  const Corpus corpus = ingest_corpus(a.corpus);
  const MiniLmModel model = load_checkpoint(a.model);
  const AwarenessClassifier clf = load_classifier(a.clf);

  LabelOptions opt;
  opt.chunk_len = a.chunk_len;
  opt.max_output = a.max_output;
  opt.mean_mode = parse_mean(a.mean);
  opt.anchor = parse_anchor(a.anchor);
  opt.threads = a.threads;
  const auto predictions = label_corpus(corpus, model, clf, opt);

  const auto rows = predictions_to_csv_rows(predictions);
  if (!rows.empty()) write_awareness_csv(rows, (dir / "awareness.csv").string());

  std::size_t failures = 0;
  std::string errors = "doc_id,error\n";
  for (const auto& p : predictions) {
    if (!p.error) continue;
    ++failures;
    errors += p.doc_id + "," + *p.error + "\n";
  }
  if (failures > 0) write_text((dir / "errors.csv").string(), errors);

  ManifestRefs refs;
  refs.corpus_path = a.corpus;
  refs.corpus_digest = corpus.digest;
  refs.classifier_path = a.clf;
  refs.classifier_digest = sha256_file_hex(a.clf);
  const auto manifest = make_splits(predictions, a.seed, a.random_size, refs);
  export_manifest(manifest, (dir / "manifest.json").string());

  echo_config(dir, "select",
              {{"model", a.model},
               {"clf", a.clf},
               {"corpus", a.corpus},
               {"out", a.out},
               {"seed", std::to_string(a.seed)},
               {"random_size",
                a.random_size ? std::to_string(*a.random_size) : std::string("auto")},
               {"chunk_len", std::to_string(a.chunk_len)},
               {"max_output", std::to_string(a.max_output)},
               {"mean", a.mean},
               {"anchor", a.anchor},
               {"threads", std::to_string(a.threads)}});
  std::cout << "selected " << manifest.familiar_ids.size() << " familiar, "
            << manifest.unfamiliar_ids.size() << " unfamiliar, " << manifest.random_ids.size()
            << " random";
  if (failures > 0) {
    std::cout << " (" << failures << " documents failed extraction)\n";
    std::cerr << "error: " << failures << " documents failed extraction; see "
              << (dir / "errors.csv").string() << "\n";
    return 2;
  }
  std::cout << "\n";
  return 0;
}

// ----------------------------------------------------------------------- sft

struct SftArgs {
  std::string model, corpus, manifest, group = "unfamiliar", out, targets = "q_proj,v_proj";
  std::size_t steps = 100;
  double lr = 1e-3, alpha = 8.0;
  std::uint32_t rank = 4;
  std::uint64_t seed = 1;
  unsigned threads = 1;
};

void run_sft(const SftArgs& a) {
  const fs::path dir = ensure_out_dir(a.out);
  const Corpus corpus = ingest_corpus(a.corpus);
  const MiniLmModel model = load_checkpoint(a.model);
  const SelectionManifest manifest = load_manifest(a.manifest);
  if (manifest.corpus_digest != corpus.digest)
    throw DataError("sft: manifest was built from a different corpus (digest mismatch)");
  if (manifest.verify_warning)
    std::cerr << "warning: manifest references files that could not be re-verified\n";

  std::map<std::string, const CorpusDocument*> by_id;
  for (const auto& doc : corpus.docs) by_id[doc.id] = &doc;
  auto docs_for = [&](const std::vector<std::string>& ids) {
    std::vector<SftDoc> docs;
    docs.reserve(ids.size());
    for (const auto& id : ids) {
      const auto it = by_id.find(id);
      if (it == by_id.end())
        throw DataError("sft: manifest id '" + id + "' is not in the corpus");
      docs.push_back(make_sft_example(id, it->second->text, model.config().max_seq_len));
    }
    return docs;
  };

  const std::vector<std::string>* group_ids = nullptr;
  if (a.group == "familiar") group_ids = &manifest.familiar_ids;
  else if (a.group == "unfamiliar") group_ids = &manifest.unfamiliar_ids;
  else if (a.group == "random") group_ids = &manifest.random_ids;
  else throw DataError("sft: unknown group '" + a.group + "' (familiar|unfamiliar|random)");
  if (group_ids->empty()) throw DataError("sft: group '" + a.group + "' is empty in the manifest");

  LoraConfig lora;
  lora.rank = a.rank;
  lora.alpha = static_cast<float>(a.alpha);
  lora.seed = a.seed;
  lora.targets.clear();
  {
    std::string item;
    std::istringstream ss(a.targets);
    while (std::getline(ss, item, ',')) lora.targets.push_back(parse_lora_target(item));
  }
  AdaptedModel adapted = attach_lora(model, lora);

  // Table-2-style snapshot over all three groups before any update.
  std::vector<GroupSummary> summaries;
  for (const auto& [name, ids] :
       {std::pair{"familiar", &manifest.familiar_ids}, {"unfamiliar", &manifest.unfamiliar_ids},
        {"random", &manifest.random_ids}}) {
    if (ids->empty()) continue;
    summaries.push_back(group_dynamics(adapted, docs_for(*ids), name, a.threads));
  }
  write_group_summary_csv(summaries, (dir / "group_summary.csv").string());

  SftOptions opt;
  opt.steps = a.steps;
  opt.lr = static_cast<float>(a.lr);
  opt.seed = a.seed;
  opt.group = a.group;
  const auto records = sft_train(adapted, docs_for(*group_ids), opt);
  write_dynamics_csv(records, (dir / "dynamics.csv").string());

  const MiniLmModel merged = merge_adapter(adapted);
  save_checkpoint(merged, (dir / "merged.kamlm").string());

  echo_config(dir, "sft",
              {{"model", a.model},
               {"corpus", a.corpus},
               {"manifest", a.manifest},
               {"group", a.group},
               {"out", a.out},
               {"steps", std::to_string(a.steps)},
               {"lr", g9(a.lr)},
               {"rank", std::to_string(a.rank)},
               {"alpha", g9(a.alpha)},
               {"targets", a.targets},
               {"seed", std::to_string(a.seed)},
               {"threads", std::to_string(a.threads)}});
  std::cout << "sft on group '" << a.group << "' (" << group_ids->size() << " docs, "
            << a.steps << " steps); adapter params " << adapted.trainable_parameter_count()
            << "; merged model at " << (dir / "merged.kamlm").string() << "\n";
}

// -------------------------------------------------------------------- report

struct ReportArgs {
  std::string csv, dynamics, out;
};

void run_report(const ReportArgs& a) {
  const fs::path dir = ensure_out_dir(a.out);
  const auto rows = read_awareness_csv(a.csv);
  std::vector<GroupedVector> vectors;
  vectors.reserve(rows.size());
  for (const auto& row : rows)
    vectors.push_back({std::string(to_string(row.label)), row.vec.doc_id, row.vec.values});

  const auto profiles = group_profiles(vectors);
  std::optional<Projection2D> projection;
  if (vectors.size() >= 3 && vectors.front().values.size() >= 2)
    projection = project_2d(vectors);

  std::vector<GroupSummary> dynamics;
  if (!a.dynamics.empty()) dynamics = read_group_summary_csv(a.dynamics);

  render_report(profiles, vectors, projection, dynamics, dir.string());
  echo_config(dir, "report", {{"csv", a.csv}, {"dynamics", a.dynamics}, {"out", a.out}});
  std::cout << "report bundle written to " << dir.string() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"KAMIR toolkit: awareness-vector extraction, data-awareness "
               "classification, split selection, LoRA SFT and reporting"};
  app.require_subcommand(1);
  app.set_config("--config", "", "config file (key = value with [subcommand] sections)");

  PretrainArgs pre;
  auto* cmd_pre = app.add_subcommand("pretrain", "train the mini-LM on a JSONL corpus");
  cmd_pre->add_option("--corpus", pre.corpus, "JSONL corpus")->required();
  cmd_pre->add_option("--out", pre.out, "output directory")->required();
  cmd_pre->add_option("--steps", pre.steps, "training steps")->capture_default_str();
  cmd_pre->add_option("--lr", pre.lr, "Adam learning rate")->capture_default_str();
  cmd_pre->add_option("--seed", pre.seed, "init + sampling seed")->capture_default_str();
  cmd_pre->add_option("--layers", pre.model.layers, "transformer blocks")->capture_default_str();
  cmd_pre->add_option("--dim", pre.model.dim, "hidden dimension")->capture_default_str();
  cmd_pre->add_option("--heads", pre.model.heads, "attention heads")->capture_default_str();
  cmd_pre->add_option("--ffn", pre.model.ffn, "FFN dimension")->capture_default_str();
  cmd_pre->add_option("--max-seq", pre.model.max_seq, "context length")->capture_default_str();

  ExtractArgs ext;
  auto* cmd_ext = app.add_subcommand("extract", "awareness vectors from a corpus or trace file");
  cmd_ext->add_option("--model", ext.model, "mini-LM checkpoint");
  cmd_ext->add_option("--corpus", ext.corpus, "JSONL corpus (labels flow into the CSV)");
  cmd_ext->add_option("--traces", ext.traces, "KHST trace file (bypasses the model)");
  cmd_ext->add_option("--out", ext.out, "output directory")->required();
  cmd_ext->add_option("--chunk-len", ext.chunk_len, "sub-passage token length")
      ->capture_default_str();
  cmd_ext->add_option("--max-output", ext.max_output, "generated tokens per sub-passage")
      ->capture_default_str();
  cmd_ext->add_option("--mean", ext.mean, "uniform|token_weighted")->capture_default_str();
  cmd_ext->add_option("--anchor", ext.anchor, "pre_final_norm|post_final_norm")
      ->capture_default_str();
  cmd_ext->add_option("--threads", ext.threads, "worker threads")->capture_default_str();

  TrainClfArgs clf;
  auto* cmd_clf = app.add_subcommand("train-clf", "train the awareness classifier on a CSV");
  cmd_clf->add_option("--csv", clf.csv, "labeled awareness CSV")->required();
  cmd_clf->add_option("--out", clf.out, "output directory")->required();
  cmd_clf->add_option("--hidden", clf.hidden, "hidden width")->capture_default_str();
  cmd_clf->add_option("--epochs", clf.epochs, "training epochs")->capture_default_str();
  cmd_clf->add_option("--lr", clf.lr, "Adam learning rate")->capture_default_str();
  cmd_clf->add_option("--batch", clf.batch, "mini-batch size")->capture_default_str();
  cmd_clf->add_option("--threshold", clf.threshold, "unfamiliar decision threshold")
      ->capture_default_str();
  cmd_clf->add_option("--seed", clf.seed, "init + shuffle seed")->capture_default_str();

  ClassifyArgs cls;
  auto* cmd_cls = app.add_subcommand("classify", "classify awareness vectors from a CSV");
  cmd_cls->add_option("--clf", cls.clf, "classifier checkpoint")->required();
  cmd_cls->add_option("--csv", cls.csv, "awareness CSV")->required();
  cmd_cls->add_option("--out", cls.out, "output directory")->required();

  SelectArgs sel;
  auto* cmd_sel = app.add_subcommand("select", "label a corpus and build the split manifest");
  cmd_sel->add_option("--model", sel.model, "mini-LM checkpoint")->required();
  cmd_sel->add_option("--clf", sel.clf, "classifier checkpoint")->required();
  cmd_sel->add_option("--corpus", sel.corpus, "JSONL corpus")->required();
  cmd_sel->add_option("--out", sel.out, "output directory")->required();
  cmd_sel->add_option("--seed", sel.seed, "random-control seed")->capture_default_str();
  std::size_t random_size_flag = 0;
  auto* rs =
      cmd_sel->add_option("--random-size", random_size_flag, "override control-split size");
  cmd_sel->add_option("--chunk-len", sel.chunk_len, "sub-passage token length")
      ->capture_default_str();
  cmd_sel->add_option("--max-output", sel.max_output, "generated tokens per sub-passage")
      ->capture_default_str();
  cmd_sel->add_option("--mean", sel.mean, "uniform|token_weighted")->capture_default_str();
  cmd_sel->add_option("--anchor", sel.anchor, "pre_final_norm|post_final_norm")
      ->capture_default_str();
  cmd_sel->add_option("--threads", sel.threads, "worker threads")->capture_default_str();

  SftArgs sft;
  auto* cmd_sft = app.add_subcommand("sft", "LoRA fine-tune on one manifest group");
  cmd_sft->add_option("--model", sft.model, "mini-LM checkpoint")->required();
  cmd_sft->add_option("--corpus", sft.corpus, "JSONL corpus the manifest references")->required();
  cmd_sft->add_option("--manifest", sft.manifest, "selection manifest")->required();
  cmd_sft->add_option("--group", sft.group, "familiar|unfamiliar|random")->capture_default_str();
  cmd_sft->add_option("--out", sft.out, "output directory")->required();
  cmd_sft->add_option("--steps", sft.steps, "training steps")->capture_default_str();
  cmd_sft->add_option("--lr", sft.lr, "Adam learning rate")->capture_default_str();
  cmd_sft->add_option("--rank", sft.rank, "LoRA rank")->capture_default_str();
  cmd_sft->add_option("--alpha", sft.alpha, "LoRA alpha")->capture_default_str();
  cmd_sft->add_option("--targets", sft.targets, "comma-separated projection targets")
      ->capture_default_str();
  cmd_sft->add_option("--seed", sft.seed, "adapter init + sampling seed")->capture_default_str();
  cmd_sft->add_option("--threads", sft.threads, "worker threads")->capture_default_str();

  ReportArgs rep;
  auto* cmd_rep = app.add_subcommand("report", "render profiles, projection and dynamics");
  cmd_rep->add_option("--csv", rep.csv, "labeled awareness CSV")->required();
  cmd_rep->add_option("--dynamics", rep.dynamics, "group summary CSV from sft");
  cmd_rep->add_option("--out", rep.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (cmd_pre->parsed()) run_pretrain(pre);
    else if (cmd_ext->parsed()) run_extract(ext);
    else if (cmd_clf->parsed()) run_train_clf(clf);
    else if (cmd_cls->parsed()) run_classify(cls);
    else if (cmd_sel->parsed()) {
      if (rs->count() > 0) sel.random_size = random_size_flag;
      return run_select(sel);
    } else if (cmd_sft->parsed()) run_sft(sft);
    else if (cmd_rep->parsed()) run_report(rep);
  } catch (const InternalError& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 0;
}
