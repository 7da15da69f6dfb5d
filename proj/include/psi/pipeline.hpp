#pragma once

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <iostream>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "psi/analytics/granger.hpp"
#include "psi/analytics/metrics.hpp"
#include "psi/analytics/series.hpp"
#include "psi/corpus.hpp"
#include "psi/ensemble.hpp"
#include "psi/http_client.hpp"
#include "psi/io.hpp"
#include "psi/llm_gateway.hpp"
#include "psi/naive_bayes.hpp"
#include "psi/prompts.hpp"
#include "psi/psi_index.hpp"

namespace psi {

inline constexpr const char* kToolVersion = "0.1.0";

enum ExitCode : int { kExitOk = 0, kExitItemFailures = 1, kExitConfigError = 2 };

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

struct EndpointConfig {
  std::string name;
  std::string provider = "fixture";  // fixture | openai | anthropic | gemini
  fs::path fixture_dir;
  std::string base_url;
  std::string api_key_env;
  std::string model;
  DecodingParams params;
};

struct PipelineConfig {
  fs::path config_path;
  fs::path out_dir = "out";
  std::uint64_t seed = 42;

  fs::path corpus_path;
  CommentFormat corpus_format = CommentFormat::Jsonl;
  std::optional<YearMonth> window_start = YearMonth(2001, 1);
  std::optional<YearMonth> window_end;
  std::vector<SurveyKind> kinds{SurveyKind::Current};
  std::optional<fs::path> aliases_path;

  std::optional<fs::path> industry_mapping;
  bool strict_industry = false;
  std::optional<fs::path> labels_path;

  std::string filter_backend = "naive_bayes";
  std::optional<fs::path> vocab_path;
  std::optional<fs::path> pretokenized_path;
  double nb_alpha = 1.0;
  NbFeatures nb_features = NbFeatures::Counts;
  SplitSpec split;

  std::optional<fs::path> prompt_language_path;
  std::optional<fs::path> filtration_shots_path;
  std::optional<fs::path> direction_shots_path;
  std::size_t filtration_k = 5;
  std::size_t direction_k = 5;
  bool with_confidence = true;

  std::map<std::string, EndpointConfig> endpoints;
  std::vector<std::string> judges;
  std::string integrator;
  EnsembleMethod ensemble = EnsembleMethod::LlmIntegration;
  std::vector<Direction> vote_priority = default_vote_priority();

  std::vector<PsiVariant> variants{std::begin(kAllVariants), std::end(kAllVariants)};

  std::optional<fs::path> cache_path;
  std::size_t max_in_flight = 4;
  RetryPolicy retry;

  PsiVariant eval_variant = PsiVariant::General;
  std::optional<fs::path> reference_path;
  std::optional<fs::path> psi_path;
  std::string reference_name;
  SeriesTransform transform = SeriesTransform::YoyPct;
  int lag_min = 0;
  int lag_max = 24;
  std::size_t min_overlap = 24;
  int granger_lag = 12;

  bool emit_plot_data = false;
  bool force = false;

  json source;  // the config document with CLI overrides folded in

  fs::path out(const std::string& name) const { return out_dir / name; }
  fs::path cache_file() const { return cache_path ? *cache_path : out("llm_cache.jsonl"); }

  static PipelineConfig load(const fs::path& path) {
    json j;
    try {
      j = json::parse(read_file(path));
    } catch (const json::exception& e) {
      throw ConfigError(path.string() + ": " + e.what());
    }
    return from_json(j, path);
  }

  static PipelineConfig from_json(const json& j, const fs::path& config_path) {
    PipelineConfig c;
    c.config_path = config_path;
    c.source = j;
    const fs::path base = config_path.has_parent_path() ? config_path.parent_path() : fs::path(".");
    auto rel = [&](const json& v) -> fs::path {
      fs::path p = v.get<std::string>();
      return p.is_absolute() ? p : base / p;
    };
    auto opt_path = [&](const json& obj, const char* key) -> std::optional<fs::path> {
      if (!obj.contains(key) || obj[key].is_null()) return std::nullopt;
      return rel(obj[key]);
    };
    try {
      if (j.contains("out_dir")) c.out_dir = rel(j["out_dir"]);
      else c.out_dir = base / "out";
      c.seed = j.value("seed", c.seed);

      const auto& corpus = j.at("corpus");
      c.corpus_path = rel(corpus.at("path"));
      c.corpus_format = corpus.contains("format") ? parse_comment_format(corpus["format"].get<std::string>())
                                                  : infer_comment_format(c.corpus_path);
      if (corpus.contains("window_start"))
        c.window_start = corpus["window_start"].is_null() ? std::nullopt
                                                          : std::optional(YearMonth::parse(corpus["window_start"].get<std::string>()));
      if (corpus.contains("window_end") && !corpus["window_end"].is_null())
        c.window_end = YearMonth::parse(corpus["window_end"].get<std::string>());
      c.aliases_path = opt_path(corpus, "aliases");
      if (corpus.contains("kinds")) {
        c.kinds.clear();
        auto aliases = AliasTable::defaults();
        for (const auto& k : corpus["kinds"]) c.kinds.push_back(aliases.kind(k.get<std::string>()));
      }

      c.industry_mapping = opt_path(j, "industry_mapping");
      c.strict_industry = j.value("strict_industry", false);
      c.labels_path = opt_path(j, "labels");

      if (j.contains("filter")) {
        const auto& f = j["filter"];
        c.filter_backend = f.value("backend", c.filter_backend);
        c.vocab_path = opt_path(f, "vocab");
        c.pretokenized_path = opt_path(f, "pretokenized");
        c.nb_alpha = f.value("alpha", c.nb_alpha);
        auto feat = f.value("features", std::string("counts"));
        if (feat == "counts") c.nb_features = NbFeatures::Counts;
        else if (feat == "presence") c.nb_features = NbFeatures::Presence;
        else throw ConfigError("filter.features must be counts or presence");
        if (f.contains("split")) {
          auto s = f["split"].get<std::vector<double>>();
          if (s.size() != 3) throw ConfigError("filter.split must list three ratios");
          c.split.train_ratio = s[0];
          c.split.dev_ratio = s[1];
          c.split.test_ratio = s[2];
        }
      }

      if (j.contains("prompts")) {
        const auto& p = j["prompts"];
        c.prompt_language_path = opt_path(p, "language");
        c.filtration_shots_path = opt_path(p, "filtration_shots");
        c.direction_shots_path = opt_path(p, "direction_shots");
        c.filtration_k = p.value("filtration_k", c.filtration_k);
        c.direction_k = p.value("direction_k", c.direction_k);
        c.with_confidence = p.value("with_confidence", c.with_confidence);
      }

      if (j.contains("endpoints")) {
        for (const auto& [name, e] : j["endpoints"].items()) {
          EndpointConfig ep;
          ep.name = name;
          ep.provider = to_lower_ascii(e.value("provider", std::string("fixture")));
          if (ep.provider == "fixture") {
            if (!e.contains("fixture_dir")) throw ConfigError("endpoint " + name + ": fixture_dir required");
            ep.fixture_dir = rel(e["fixture_dir"]);
          } else {
            parse_provider(ep.provider);
            ep.base_url = e.at("base_url").get<std::string>();
            ep.api_key_env = e.value("api_key_env", std::string());
          }
          ep.model = e.value("model", name);
          ep.params.temperature = e.value("temperature", 0.0);
          ep.params.max_tokens = e.value("max_tokens", 256);
          c.endpoints[name] = ep;
        }
      }
      if (j.contains("judges")) c.judges = j["judges"].get<std::vector<std::string>>();
      c.integrator = j.value("integrator", std::string());
      if (j.contains("ensemble")) {
        auto m = to_lower_ascii(j["ensemble"].get<std::string>());
        if (m == "llm") c.ensemble = EnsembleMethod::LlmIntegration;
        else if (m == "vote") c.ensemble = EnsembleMethod::Vote;
        else throw ConfigError("ensemble must be llm or vote");
      }
      if (j.contains("vote_priority")) {
        c.vote_priority.clear();
        for (const auto& l : j["vote_priority"]) c.vote_priority.push_back(parse_direction(l.get<std::string>()));
      }
      if (j.contains("variants")) {
        c.variants.clear();
        for (const auto& v : j["variants"]) c.variants.push_back(parse_variant(v.get<std::string>()));
      }

      c.cache_path = opt_path(j, "cache");
      c.max_in_flight = j.value("max_in_flight", c.max_in_flight);
      if (j.contains("retry")) {
        const auto& r = j["retry"];
        c.retry.max_attempts = r.value("max_attempts", c.retry.max_attempts);
        c.retry.initial_delay = std::chrono::milliseconds(r.value("initial_delay_ms", 500));
        c.retry.backoff = r.value("backoff", c.retry.backoff);
        c.retry.max_delay = std::chrono::milliseconds(r.value("max_delay_ms", 30000));
      }

      if (j.contains("analytics")) {
        const auto& a = j["analytics"];
        if (a.contains("variant")) c.eval_variant = parse_variant(a["variant"].get<std::string>());
        c.reference_path = opt_path(a, "reference");
        c.psi_path = opt_path(a, "psi");
        c.reference_name = a.value("reference_name", std::string());
        if (a.contains("transform")) c.transform = parse_transform(a["transform"].get<std::string>());
        c.lag_min = a.value("lag_min", c.lag_min);
        c.lag_max = a.value("lag_max", c.lag_max);
        c.min_overlap = a.value("min_overlap", c.min_overlap);
        c.granger_lag = a.value("max_lag", c.granger_lag);
      }
      c.emit_plot_data = j.value("emit_plot_data", false);
    } catch (const json::exception& e) {
      throw ConfigError(config_path.string() + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ConfigError(config_path.string() + ": " + e.what());
    }
    c.validate();
    return c;
  }

  void validate() const {
    if (ensemble == EnsembleMethod::LlmIntegration && judges.empty())
      throw ConfigError("judge list must be non-empty when ensemble = llm");
    for (const auto& name : judges)
      if (!endpoints.count(name)) throw ConfigError("judge \"" + name + "\" has no endpoint entry");
    if (ensemble == EnsembleMethod::LlmIntegration) {
      if (judges.size() < 2) throw ConfigError("llm integration needs at least two judges");
      if (!endpoints.count(integrator)) throw ConfigError("integrator \"" + integrator + "\" has no endpoint entry");
    }
    if (filter_backend.rfind("llm:", 0) == 0 && !endpoints.count(filter_backend.substr(4)))
      throw ConfigError("filter backend " + filter_backend + " names an unknown endpoint");
    split.validate();
    if (lag_min > lag_max) throw ConfigError("analytics.lag_min exceeds lag_max");
  }
};

// ---------------------------------------------------------------------------
// Run manifests
// ---------------------------------------------------------------------------

inline std::string utc_timestamp() {
  auto t = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

/// Records what a stage consumed and produced. A stage whose recorded input
/// and config digests match the current ones, and whose outputs all exist,
/// is skipped.
struct RunManifest {
  std::string stage;
  std::map<std::string, std::string> input_digests;  // path -> sha256
  std::string config_digest;
  std::vector<std::string> outputs;
  std::string started_at;
  std::string finished_at;
  std::string tool_version = kToolVersion;

  json to_json() const {
    return json{{"stage", stage},           {"input_digests", input_digests}, {"config_digest", config_digest},
                {"outputs", outputs},       {"started_at", started_at},       {"finished_at", finished_at},
                {"tool_version", tool_version}};
  }

  static std::optional<RunManifest> read(const fs::path& path) {
    if (!fs::exists(path)) return std::nullopt;
    try {
      auto j = json::parse(read_file(path));
      RunManifest m;
      m.stage = j.at("stage").get<std::string>();
      m.input_digests = j.at("input_digests").get<std::map<std::string, std::string>>();
      m.config_digest = j.at("config_digest").get<std::string>();
      m.outputs = j.at("outputs").get<std::vector<std::string>>();
      m.started_at = j.value("started_at", "");
      m.finished_at = j.value("finished_at", "");
      m.tool_version = j.value("tool_version", "");
      return m;
    } catch (const std::exception&) {
      return std::nullopt;  // unreadable manifest: rerun the stage
    }
  }
};

struct StageResult {
  std::string stage;
  int exit_code = kExitOk;
  bool skipped = false;
  std::size_t item_errors = 0;
  std::string summary;
  std::vector<fs::path> outputs;
};

namespace detail {

inline fs::path manifest_path(const PipelineConfig& c, const std::string& stage) {
  return c.out("manifests") / (stage + ".json");
}

inline std::map<std::string, std::string> digest_inputs(const std::vector<fs::path>& inputs) {
  std::map<std::string, std::string> out;
  for (const auto& p : inputs) {
    if (!fs::exists(p)) throw IoError("missing input " + p.string());
    out[p.lexically_normal().string()] = file_digest(p);
  }
  return out;
}

/// Settings that influence one stage, digested for resume decisions.
inline std::string stage_config_digest(const PipelineConfig& c, const std::string& stage) {
  static const std::map<std::string, std::vector<std::string>> keys = {
      {"filter", {"corpus", "filter", "prompts", "endpoints", "labels", "seed", "cache"}},
      {"classify", {"prompts", "endpoints", "judges", "cache", "max_in_flight", "retry"}},
      {"integrate", {"prompts", "endpoints", "judges", "integrator", "ensemble", "vote_priority", "cache"}},
      {"index", {"industry_mapping", "strict_industry", "variants", "emit_plot_data"}},
      {"evaluate", {"analytics"}},
  };
  json subset = json::object();
  for (const auto& k : keys.at(stage))
    if (c.source.contains(k)) subset[k] = c.source[k];
  return sha256_hex(subset.dump());
}

inline bool up_to_date(const PipelineConfig& c, const std::string& stage,
                       const std::map<std::string, std::string>& inputs, const std::string& config_digest,
                       const std::vector<fs::path>& outputs) {
  if (c.force) return false;
  auto m = RunManifest::read(manifest_path(c, stage));
  if (!m || m->input_digests != inputs || m->config_digest != config_digest) return false;
  for (const auto& o : outputs)
    if (!fs::exists(o)) return false;
  return true;
}

inline void write_manifest(const PipelineConfig& c, const std::string& stage,
                           const std::map<std::string, std::string>& inputs, const std::string& config_digest,
                           const std::vector<fs::path>& outputs, const std::string& started) {
  RunManifest m;
  m.stage = stage;
  m.input_digests = inputs;
  m.config_digest = config_digest;
  for (const auto& o : outputs) m.outputs.push_back(o.lexically_normal().string());
  m.started_at = started;
  m.finished_at = utc_timestamp();
  write_file_atomic(manifest_path(c, stage), m.to_json().dump(2) + "\n");
}

inline void require_file(const fs::path& p, const std::string& what) {
  if (!fs::exists(p)) throw ConfigError(what + " not found: " + p.string());
}

/// Client that fails every call; stands in for a live endpoint whose
/// credentials are absent so cached replies still resolve.
class UnavailableClient : public ChatClient {
 public:
  UnavailableClient(std::string model, std::string reason) : model_(std::move(model)), reason_(std::move(reason)) {}
  std::string complete(const ChatRequest&) override { throw TransportError(reason_, false); }
  std::string model_id() const override { return model_; }

 private:
  std::string model_, reason_;
};

inline std::unique_ptr<ChatClient> make_client(const EndpointConfig& ep) {
  if (ep.provider == "fixture") {
    require_file(ep.fixture_dir, "fixture directory for endpoint " + ep.name);
    return std::make_unique<FixtureClient>(ep.fixture_dir, ep.model);
  }
  EndpointSpec spec;
  spec.provider = parse_provider(ep.provider);
  spec.base_url = ep.base_url;
  spec.model = ep.model;
  if (!ep.api_key_env.empty()) {
    const char* key = std::getenv(ep.api_key_env.c_str());
    if (!key || !*key)
      return std::make_unique<UnavailableClient>(ep.model, "credential variable " + ep.api_key_env + " is not set");
    spec.api_key = key;
  }
  return std::make_unique<HttpChatClient>(spec);
}

inline PromptLanguage load_language(const PipelineConfig& c) {
  return c.prompt_language_path ? PromptLanguage::load(*c.prompt_language_path) : PromptLanguage::english();
}

inline std::vector<SurveyComment> load_stage_comments(const fs::path& p) {
  LoadOptions opts;
  opts.window_start.reset();
  return load_comments(p, CommentFormat::Jsonl, opts);
}

inline BatchOptions batch_options(const PipelineConfig& c, const std::string& judge_id, const PromptLanguage& lang) {
  BatchOptions o;
  o.max_in_flight = c.max_in_flight;
  o.retry = c.retry;
  o.judgment_model_id = judge_id;
  o.language = &lang;
  return o;
}

inline json judgment_to_json(const std::string& comment_id, const ModelJudgment& j) {
  return json{{"comment_id", comment_id},
              {"model_id", j.model_id},
              {"label", j.direction ? to_string(*j.direction) : j.relevance ? to_string(*j.relevance) : ""},
              {"confidence", j.confidence ? json(*j.confidence) : json(nullptr)},
              {"reason", j.reason ? json(*j.reason) : json(nullptr)},
              {"raw", j.raw}};
}

inline void write_errors_sidecar(const fs::path& path, const std::vector<json>& errors) {
  if (errors.empty()) {
    fs::remove(path);
    return;
  }
  write_file_atomic(path, to_jsonl(errors));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// filter
// ---------------------------------------------------------------------------

/// Stage 1: keep price-related comments. Writes filtered.jsonl (retained
/// comments plus relevance provenance) and, with gold labels, filter_eval.json.
inline StageResult cmd_filter(const PipelineConfig& c, std::ostream& log = std::cout) {
  StageResult res;
  res.stage = "filter";
  const auto started = utc_timestamp();
  const auto out_path = c.out("filtered.jsonl");
  const auto eval_path = c.out("filter_eval.json");
  const auto errors_path = c.out("filtered.errors.jsonl");

  detail::require_file(c.corpus_path, "corpus");
  std::vector<fs::path> inputs{c.corpus_path};
  const std::string& backend = c.filter_backend;
  std::optional<fs::path> external_path;
  if (backend == "naive_bayes") {
    if (!c.labels_path) throw ConfigError("naive_bayes filter needs labels for training");
    if (!c.vocab_path && !c.pretokenized_path) throw ConfigError("naive_bayes filter needs filter.vocab or filter.pretokenized");
  } else if (backend.rfind("external:", 0) == 0) {
    fs::path p = backend.substr(9);
    external_path = p.is_absolute() ? p : c.config_path.parent_path() / p;
    inputs.push_back(*external_path);
  } else if (backend.rfind("llm:", 0) != 0) {
    throw ConfigError("unknown filter backend \"" + backend + "\"");
  }
  for (auto opt : {c.labels_path, c.vocab_path, c.pretokenized_path, c.aliases_path, c.filtration_shots_path,
                   c.prompt_language_path})
    if (opt) {
      detail::require_file(*opt, "filter input");
      inputs.push_back(*opt);
    }

  auto digests = detail::digest_inputs(inputs);
  auto cfg_digest = detail::stage_config_digest(c, "filter");
  std::vector<fs::path> outputs{out_path};
  if (c.labels_path) outputs.push_back(eval_path);
  if (detail::up_to_date(c, "filter", digests, cfg_digest, outputs)) {
    res.skipped = true;
    res.summary = "filter: up to date";
    res.outputs = outputs;
    log << res.summary << "\n";
    return res;
  }

  LoadOptions lo;
  if (c.aliases_path) lo.aliases = AliasTable::load(*c.aliases_path);
  lo.window_start = c.window_start;
  lo.window_end = c.window_end;
  LoadStats stats;
  auto all = load_comments(c.corpus_path, c.corpus_format, lo, &stats);
  std::vector<SurveyComment> corpus;
  for (const auto& cm : all)
    if (std::find(c.kinds.begin(), c.kinds.end(), cm.survey_kind) != c.kinds.end()) corpus.push_back(cm);

  std::vector<LabeledComment> labels;
  if (c.labels_path) labels = load_labels(*c.labels_path, all);

  // id -> (label, provenance)
  std::map<std::string, std::pair<Relevance, json>> verdicts;
  std::vector<json> errors;
  std::vector<std::string> eval_ids;  // ids the gold comparison runs over

  if (backend == "naive_bayes") {
    Tokenizer tok = c.pretokenized_path ? Tokenizer::external(*c.pretokenized_path)
                                        : Tokenizer::lexicon(load_vocabulary(*c.vocab_path));
    std::vector<std::string> vocab = c.vocab_path ? load_vocabulary(*c.vocab_path) : std::vector<std::string>{};
    std::vector<LabeledComment> relevance_labeled;
    for (const auto& l : labels)
      if (l.relevance) relevance_labeled.push_back(l);
    SplitSpec spec = c.split;
    spec.seed = c.seed;
    auto parts = split_dataset(relevance_labeled, spec);
    std::vector<NbDocument> docs;
    for (const auto& l : parts.train) docs.push_back({tok.tokenize(l.comment.text, l.comment.id), to_string(*l.relevance)});
    if (vocab.empty()) {
      std::set<std::string> v;
      for (const auto& d : docs) v.insert(d.tokens.begin(), d.tokens.end());
      vocab.assign(v.begin(), v.end());
    }
    auto model = nb_train(docs, vocab, c.nb_alpha, {"no", "yes"}, c.nb_features);
    for (const auto& cm : corpus) {
      auto pred = nb_predict(model, tok.tokenize(cm.text, cm.id));
      json lp = json::object();
      for (std::size_t i = 0; i < model.labels.size(); ++i) lp[model.labels[i]] = pred.log_posterior[i];
      verdicts[cm.id] = {parse_relevance(pred.label), json{{"backend", backend}, {"label", pred.label}, {"log_posterior", lp}}};
    }
    for (const auto& l : parts.test) eval_ids.push_back(l.comment.id);
  } else if (external_path) {
    std::map<std::string, Relevance> ext;
    for_each_jsonl(*external_path, [&](const json& obj, std::size_t line) {
      try {
        const auto& v = obj.contains("price_related") ? obj["price_related"] : obj.at("label");
        ext[obj.at("id").get<std::string>()] =
            v.is_boolean() ? (v.get<bool>() ? Relevance::PriceRelated : Relevance::NotPriceRelated)
                           : parse_relevance(v.get<std::string>());
      } catch (const std::exception& e) {
        throw ParseError(external_path->filename().string() + ": " + e.what(), line);
      }
    });
    for (const auto& cm : corpus) {
      auto it = ext.find(cm.id);
      if (it == ext.end()) {
        errors.push_back({{"comment_id", cm.id}, {"error", "no external prediction"}});
        continue;
      }
      verdicts[cm.id] = {it->second, json{{"backend", "external"}, {"label", to_string(it->second)}}};
    }
    for (const auto& l : labels)
      if (l.relevance) eval_ids.push_back(l.comment.id);
  } else {
    const auto name = backend.substr(4);
    const auto& ep = c.endpoints.at(name);
    auto lang = detail::load_language(c);
    std::vector<FewShotExample> shots;
    if (c.filtration_shots_path) shots = load_shots(*c.filtration_shots_path);
    std::vector<ChatRequest> reqs;
    for (const auto& cm : corpus)
      reqs.push_back({"", build_filtration_prompt(cm.text, shots, std::min(c.filtration_k, shots.size()), lang), ep.params});
    auto client = detail::make_client(ep);
    ResponseCache cache(c.cache_file());
    auto items = classify_batch(*client, reqs, PromptTask::Filtration, &cache, detail::batch_options(c, name, lang));
    for (std::size_t i = 0; i < corpus.size(); ++i) {
      if (!items[i].ok()) {
        errors.push_back({{"comment_id", corpus[i].id}, {"model_id", name}, {"error", items[i].error}});
        continue;
      }
      auto rel = *items[i].judgment->relevance;
      verdicts[corpus[i].id] = {rel, json{{"backend", backend}, {"label", to_string(rel)}, {"raw", items[i].reply}}};
    }
    for (const auto& l : labels)
      if (l.relevance) eval_ids.push_back(l.comment.id);
  }

  std::vector<json> rows;
  for (const auto& cm : corpus) {
    auto it = verdicts.find(cm.id);
    if (it == verdicts.end() || it->second.first != Relevance::PriceRelated) continue;
    auto row = comment_to_json(cm);
    row["relevance"] = it->second.second;
    rows.push_back(std::move(row));
  }
  write_file_atomic(out_path, to_jsonl(rows));
  detail::write_errors_sidecar(errors_path, errors);

  std::ostringstream summary;
  summary << "filter: " << corpus.size() << " comments considered (" << stats.dropped_out_of_window
          << " outside window), " << rows.size() << " retained via " << backend;
  if (c.labels_path) {
    std::map<std::string, Relevance> gold;
    for (const auto& l : labels)
      if (l.relevance) gold[l.comment.id] = *l.relevance;
    std::vector<std::string> g, p;
    for (const auto& id : eval_ids) {
      auto v = verdicts.find(id);
      if (v == verdicts.end()) continue;
      g.push_back(to_string(gold.at(id)));
      p.push_back(to_string(v->second.first));
    }
    if (!g.empty()) {
      auto report = weighted_f1(g, p);
      auto j = report.to_json();
      j["backend"] = backend;
      write_file_atomic(eval_path, j.dump(2) + "\n");
      summary << "; weighted F1 = " << report.weighted_f1 << " on " << g.size() << " labeled comments";
    } else {
      write_file_atomic(eval_path, json{{"backend", backend}, {"n", 0}}.dump(2) + "\n");
    }
  }
  res.item_errors = errors.size();
  if (!errors.empty()) {
    summary << "; " << errors.size() << " item errors (see " << errors_path.filename().string() << ")";
    res.exit_code = kExitItemFailures;
  } else {
    detail::write_manifest(c, "filter", digests, cfg_digest, outputs, started);
  }
  res.summary = summary.str();
  res.outputs = outputs;
  log << res.summary << "\n";
  return res;
}

// ---------------------------------------------------------------------------
// classify
// ---------------------------------------------------------------------------

/// Stage 2: one direction judgment per (comment, judge). Writes judgments.jsonl
/// and, when any item fails, judgments.errors.jsonl.
inline StageResult cmd_classify(const PipelineConfig& c, std::ostream& log = std::cout) {
  StageResult res;
  res.stage = "classify";
  const auto started = utc_timestamp();
  const auto in_path = c.out("filtered.jsonl");
  const auto out_path = c.out("judgments.jsonl");
  const auto errors_path = c.out("judgments.errors.jsonl");
  detail::require_file(in_path, "filtered comments (run filter first)");
  if (c.judges.empty()) throw ConfigError("no judges configured");

  std::vector<fs::path> inputs{in_path};
  for (auto opt : {c.direction_shots_path, c.prompt_language_path})
    if (opt) {
      detail::require_file(*opt, "prompt input");
      inputs.push_back(*opt);
    }
  auto digests = detail::digest_inputs(inputs);
  auto cfg_digest = detail::stage_config_digest(c, "classify");
  if (detail::up_to_date(c, "classify", digests, cfg_digest, {out_path})) {
    res.skipped = true;
    res.summary = "classify: up to date";
    res.outputs = {out_path};
    log << res.summary << "\n";
    return res;
  }

  auto comments = detail::load_stage_comments(in_path);
  auto lang = detail::load_language(c);
  std::vector<FewShotExample> shots;
  if (c.direction_shots_path) shots = load_shots(*c.direction_shots_path);
  const std::size_t k = std::min(c.direction_k, shots.size());

  std::vector<std::vector<BatchItem>> per_judge;
  for (const auto& name : c.judges) {
    const auto& ep = c.endpoints.at(name);
    std::vector<ChatRequest> reqs;
    for (const auto& cm : comments)
      reqs.push_back({"", build_direction_prompt(cm.text, shots, k, c.with_confidence, lang), ep.params});
    auto client = detail::make_client(ep);
    ResponseCache cache(c.cache_file());
    per_judge.push_back(classify_batch(*client, reqs, PromptTask::Direction, &cache, detail::batch_options(c, name, lang)));
  }

  std::vector<json> rows, errors;
  std::size_t dispatched = 0;
  for (std::size_t i = 0; i < comments.size(); ++i) {
    for (std::size_t jdx = 0; jdx < c.judges.size(); ++jdx) {
      const auto& item = per_judge[jdx][i];
      if (!item.from_cache && item.attempts > 0) ++dispatched;
      if (item.ok()) {
        rows.push_back(detail::judgment_to_json(comments[i].id, *item.judgment));
      } else {
        errors.push_back({{"comment_id", comments[i].id}, {"model_id", c.judges[jdx]}, {"error", item.error}});
      }
    }
  }
  write_file_atomic(out_path, to_jsonl(rows));
  detail::write_errors_sidecar(errors_path, errors);

  std::ostringstream summary;
  summary << "classify: " << rows.size() << " judgments from " << c.judges.size() << " judges over " << comments.size()
          << " comments (" << dispatched << " dispatched)";
  res.item_errors = errors.size();
  if (!errors.empty()) {
    summary << "; " << errors.size() << " item errors (see " << errors_path.filename().string() << ")";
    res.exit_code = kExitItemFailures;
  } else {
    detail::write_manifest(c, "classify", digests, cfg_digest, {out_path}, started);
  }
  res.summary = summary.str();
  res.outputs = {out_path};
  log << res.summary << "\n";
  return res;
}

inline std::map<std::string, std::vector<ModelJudgment>> load_judgments(const fs::path& path) {
  std::map<std::string, std::vector<ModelJudgment>> out;
  for_each_jsonl(path, [&](const json& obj, std::size_t line) {
    try {
      ModelJudgment j;
      j.model_id = obj.at("model_id").get<std::string>();
      j.direction = parse_direction(obj.at("label").get<std::string>());
      if (obj.contains("confidence") && !obj["confidence"].is_null()) j.confidence = obj["confidence"].get<int>();
      if (obj.contains("reason") && !obj["reason"].is_null()) j.reason = obj["reason"].get<std::string>();
      j.raw = obj.value("raw", "");
      out[obj.at("comment_id").get<std::string>()].push_back(std::move(j));
    } catch (const std::exception& e) {
      throw ParseError(path.filename().string() + ": " + e.what(), line);
    }
  });
  return out;
}

// ---------------------------------------------------------------------------
// integrate
// ---------------------------------------------------------------------------

/// Stage 3: one EnsembleDecision per comment. Writes decisions.jsonl.
inline StageResult cmd_integrate(const PipelineConfig& c, std::ostream& log = std::cout) {
  StageResult res;
  res.stage = "integrate";
  const auto started = utc_timestamp();
  const auto comments_path = c.out("filtered.jsonl");
  const auto judgments_path = c.out("judgments.jsonl");
  const auto out_path = c.out("decisions.jsonl");
  const auto errors_path = c.out("decisions.errors.jsonl");
  detail::require_file(comments_path, "filtered comments");
  detail::require_file(judgments_path, "judgments (run classify first)");

  std::vector<fs::path> inputs{comments_path, judgments_path};
  if (c.prompt_language_path) inputs.push_back(*c.prompt_language_path);
  auto digests = detail::digest_inputs(inputs);
  auto cfg_digest = detail::stage_config_digest(c, "integrate");
  if (detail::up_to_date(c, "integrate", digests, cfg_digest, {out_path})) {
    res.skipped = true;
    res.summary = "integrate: up to date";
    res.outputs = {out_path};
    log << res.summary << "\n";
    return res;
  }

  auto comments = detail::load_stage_comments(comments_path);
  auto judgments = load_judgments(judgments_path);
  auto lang = detail::load_language(c);

  std::vector<std::optional<EnsembleDecision>> decisions(comments.size());
  std::vector<std::string> item_error(comments.size());

  // Order each comment's judgments like the judge list; report absent judges.
  std::vector<std::vector<ModelJudgment>> ordered(comments.size());
  for (std::size_t i = 0; i < comments.size(); ++i) {
    const auto it = judgments.find(comments[i].id);
    std::vector<std::string> missing;
    for (const auto& judge : c.judges) {
      bool found = false;
      if (it != judgments.end())
        for (const auto& j : it->second)
          if (j.model_id == judge) {
            ordered[i].push_back(j);
            found = true;
            break;
          }
      if (!found) missing.push_back(judge);
    }
    if (c.judges.empty() && it != judgments.end()) ordered[i] = it->second;
    if (ordered[i].empty() || !missing.empty()) {
      std::string m;
      for (const auto& s : missing) m += (m.empty() ? "" : ", ") + s;
      item_error[i] = "missing judgments for comment" + (m.empty() ? std::string() : " from " + m);
    }
  }

  if (c.ensemble == EnsembleMethod::Vote) {
    for (std::size_t i = 0; i < comments.size(); ++i) {
      if (!item_error[i].empty()) continue;
      decisions[i] = integrate_vote(ordered[i], c.vote_priority, comments[i].id);
    }
  } else {
    const auto& ep = c.endpoints.at(c.integrator);
    std::vector<std::size_t> idx;
    std::vector<ChatRequest> reqs;
    for (std::size_t i = 0; i < comments.size(); ++i) {
      if (!item_error[i].empty()) continue;
      try {
        reqs.push_back(integration_request(comments[i].text, ordered[i], ep.params, lang));
        idx.push_back(i);
      } catch (const PreconditionError& e) {
        item_error[i] = e.what();
      }
    }
    auto client = detail::make_client(ep);
    ResponseCache cache(c.cache_file());
    auto items = classify_batch(*client, reqs, PromptTask::Integration, &cache, detail::batch_options(c, c.integrator, lang));
    for (std::size_t r = 0; r < idx.size(); ++r) {
      const auto i = idx[r];
      if (items[r].ok()) {
        decisions[i] = EnsembleDecision{comments[i].id, *items[r].judgment->direction, EnsembleMethod::LlmIntegration,
                                        ordered[i], ep.model};
      } else if (!items[r].reply.empty()) {
        item_error[i] = UnintegrableReply(items[r].reply).what();
      } else {
        item_error[i] = items[r].error;
      }
    }
  }

  std::vector<json> rows, errors;
  for (std::size_t i = 0; i < comments.size(); ++i) {
    if (decisions[i]) rows.push_back(decision_to_json(*decisions[i]));
    else errors.push_back({{"comment_id", comments[i].id}, {"error", item_error[i]}});
  }
  write_file_atomic(out_path, to_jsonl(rows));
  detail::write_errors_sidecar(errors_path, errors);

  std::ostringstream summary;
  summary << "integrate: " << rows.size() << " decisions via " << to_string(c.ensemble);
  if (c.ensemble == EnsembleMethod::LlmIntegration) summary << " (integrator " << c.integrator << ")";
  res.item_errors = errors.size();
  if (!errors.empty()) {
    summary << "; " << errors.size() << " item errors (see " << errors_path.filename().string() << ")";
    res.exit_code = kExitItemFailures;
  } else {
    detail::write_manifest(c, "integrate", digests, cfg_digest, {out_path}, started);
  }
  res.summary = summary.str();
  res.outputs = {out_path};
  log << res.summary << "\n";
  return res;
}

// ---------------------------------------------------------------------------
// index
// ---------------------------------------------------------------------------

inline std::vector<DatedDecision> load_dated_decisions(const fs::path& decisions_path, const fs::path& comments_path) {
  auto comments = detail::load_stage_comments(comments_path);
  std::map<std::string, const SurveyComment*> by_id;
  for (const auto& cm : comments) by_id[cm.id] = &cm;
  std::vector<DatedDecision> out;
  for_each_jsonl(decisions_path, [&](const json& obj, std::size_t line) {
    try {
      auto id = obj.at("comment_id").get<std::string>();
      auto it = by_id.find(id);
      if (it == by_id.end()) throw ValidationError("decision for unknown comment id \"" + id + "\"");
      out.push_back({*it->second, parse_direction(obj.at("label").get<std::string>())});
    } catch (const json::exception& e) {
      throw ParseError(decisions_path.filename().string() + ": " + e.what(), line);
    } catch (const ValidationError& e) {
      throw ParseError(decisions_path.filename().string() + ": " + e.what(), line);
    }
  });
  return out;
}

/// Stage 4: monthly PSI per requested variant. Writes psi_<variant>.csv for
/// each, the combined psi_index.csv and, on request, plot_data.csv.
inline StageResult cmd_index(const PipelineConfig& c, std::ostream& log = std::cout) {
  StageResult res;
  res.stage = "index";
  const auto started = utc_timestamp();
  bool needs_mapping = false;
  for (auto v : c.variants) needs_mapping |= variant_spec(v).industry.has_value();
  if (needs_mapping && !c.industry_mapping)
    throw ConfigError("industry-filtered variants requested but no industry_mapping configured");

  const auto comments_path = c.out("filtered.jsonl");
  const auto decisions_path = c.out("decisions.jsonl");
  detail::require_file(comments_path, "filtered comments");
  detail::require_file(decisions_path, "decisions (run integrate first)");
  std::vector<fs::path> inputs{comments_path, decisions_path};
  if (c.industry_mapping) {
    detail::require_file(*c.industry_mapping, "industry mapping");
    inputs.push_back(*c.industry_mapping);
  }
  std::vector<fs::path> outputs;
  for (auto v : c.variants) outputs.push_back(c.out("psi_" + to_string(v) + ".csv"));
  outputs.push_back(c.out("psi_index.csv"));
  if (c.emit_plot_data) outputs.push_back(c.out("plot_data.csv"));

  auto digests = detail::digest_inputs(inputs);
  auto cfg_digest = detail::stage_config_digest(c, "index");
  if (detail::up_to_date(c, "index", digests, cfg_digest, outputs)) {
    res.skipped = true;
    res.summary = "index: up to date";
    res.outputs = outputs;
    log << res.summary << "\n";
    return res;
  }

  std::optional<IndustryMapping> mapping;
  if (c.industry_mapping) mapping = IndustryMapping::load(*c.industry_mapping, c.strict_industry);
  auto decisions = load_dated_decisions(decisions_path, comments_path);

  std::string combined = psi_csv_header();
  std::string plot = "series,month,value\n";
  std::ostringstream summary;
  summary << "index: " << decisions.size() << " decisions;";
  for (std::size_t vi = 0; vi < c.variants.size(); ++vi) {
    auto series = build_index(decisions, variant_spec(c.variants[vi]), mapping ? &*mapping : nullptr);
    auto rows = psi_csv_rows(series);
    write_file_atomic(outputs[vi], psi_csv_header() + rows);
    combined += rows;
    plot += plot_data_rows(series);
    std::size_t nulls = 0;
    for (const auto& p : series.points) nulls += !p.psi;
    summary << " " << to_string(c.variants[vi]) << "=" << series.points.size() << " months";
    if (nulls) summary << " (" << nulls << " null)";
  }
  write_file_atomic(c.out("psi_index.csv"), combined);
  if (c.emit_plot_data) write_file_atomic(c.out("plot_data.csv"), plot);
  detail::write_manifest(c, "index", digests, cfg_digest, outputs, started);
  res.summary = summary.str();
  res.outputs = outputs;
  log << res.summary << "\n";
  return res;
}

// ---------------------------------------------------------------------------
// evaluate
// ---------------------------------------------------------------------------

/// Reads the psi column of a PSI CSV as a series. Null months are skipped.
/// When the file holds several variants, `variant` selects one.
inline TimeSeries load_psi_series(const fs::path& path, std::optional<PsiVariant> variant = std::nullopt) {
  auto csv = read_csv(path);
  auto cm = csv.column("month"), cv = csv.column("variant"), cp = csv.column("psi");
  if (cm == CsvTable::npos || cp == CsvTable::npos)
    throw ParseError(path.filename().string() + ": expected month,variant,psi columns", 1);
  std::set<std::string> seen_variants;
  if (cv != CsvTable::npos)
    for (const auto& row : csv.rows) seen_variants.insert(row[cv]);
  std::optional<std::string> want;
  if (variant) want = to_string(*variant);
  else if (seen_variants.size() > 1) throw ConfigError(path.string() + " holds several variants; choose one");
  std::string name = want ? *want : seen_variants.empty() ? path.stem().string() : *seen_variants.begin();
  TimeSeries s("psi:" + name);
  for (std::size_t r = 0; r < csv.rows.size(); ++r) {
    const auto& row = csv.rows[r];
    if (want && cv != CsvTable::npos && row[cv] != *want) continue;
    auto v = trim(row[cp]);
    if (v.empty()) continue;
    double x = 0.0;
    auto res = std::from_chars(v.data(), v.data() + v.size(), x);
    if (res.ec != std::errc{}) throw ParseError(path.filename().string() + ": invalid psi value", csv.row_lines[r]);
    try {
      s.insert(YearMonth::parse(trim(row[cm])), x);
    } catch (const ValidationError& e) {
      throw ParseError(path.filename().string() + ": " + e.what(), csv.row_lines[r]);
    }
  }
  return s;
}

/// Stage 5: lead/lag correlation and Granger tests in both directions between
/// a PSI series and a reference series. Writes lagcorr.csv, granger.csv and
/// evaluation.json.
inline StageResult cmd_evaluate(const PipelineConfig& c, std::ostream& log = std::cout) {
  StageResult res;
  res.stage = "evaluate";
  const auto started = utc_timestamp();
  if (!c.reference_path) throw ConfigError("evaluate needs a reference series (analytics.reference or --reference)");
  const fs::path psi_path = c.psi_path ? *c.psi_path : c.out("psi_" + to_string(c.eval_variant) + ".csv");
  detail::require_file(psi_path, "PSI series");
  detail::require_file(*c.reference_path, "reference series");

  const auto lag_path = c.out("lagcorr.csv"), granger_path = c.out("granger.csv"), summary_path = c.out("evaluation.json");
  std::vector<fs::path> outputs{lag_path, granger_path, summary_path};
  auto digests = detail::digest_inputs({psi_path, *c.reference_path});
  auto cfg_digest = detail::stage_config_digest(c, "evaluate");
  if (detail::up_to_date(c, "evaluate", digests, cfg_digest, outputs)) {
    res.skipped = true;
    res.summary = "evaluate: up to date";
    res.outputs = outputs;
    log << res.summary << "\n";
    return res;
  }

  auto psi_series = load_psi_series(psi_path, c.eval_variant);
  auto reference = load_series(*c.reference_path, c.reference_name);
  auto ref = transform_series(reference, c.transform);

  auto lag = lagged_correlation(psi_series, ref, c.lag_min, c.lag_max, c.min_overlap);
  std::string lag_csv = "lag,r,n_overlap\n";
  for (const auto& [k, r] : lag.per_lag)
    lag_csv += std::to_string(k) + "," + format_double(r) + "," + std::to_string(lag.n_overlap.at(k)) + "\n";

  auto forward = granger_test(psi_series, ref, c.granger_lag);
  auto backward = granger_test(ref, psi_series, c.granger_lag);
  std::string granger_csv = "A,B,F value,p value,lag,n\n";
  json granger_rows = json::array();
  for (const auto* g : {&forward, &backward}) {
    granger_csv += csv_row({g->cause, g->effect, format_double(g->f_value), format_double(g->p_value),
                            std::to_string(g->lag), std::to_string(g->n_effective)});
    granger_rows.push_back({{"A", g->cause}, {"B", g->effect}, {"f_value", g->f_value}, {"p_value", g->p_value},
                            {"lag", g->lag}, {"n", g->n_effective}});
  }

  json summary{{"psi", psi_series.name()},
               {"reference", ref.name()},
               {"transform", to_string(c.transform)},
               {"best_lag", lag.best_lag},
               {"best_r", lag.best_r},
               {"n", lag.n_overlap.at(lag.best_lag)},
               {"lag_min", c.lag_min},
               {"lag_max", c.lag_max},
               {"min_overlap", c.min_overlap},
               {"granger", granger_rows},
               {"input_digests", {{"psi", file_digest(psi_path)}, {"reference", file_digest(*c.reference_path)}}}};
  write_file_atomic(lag_path, lag_csv);
  write_file_atomic(granger_path, granger_csv);
  write_file_atomic(summary_path, summary.dump(2) + "\n");
  detail::write_manifest(c, "evaluate", digests, cfg_digest, outputs, started);

  std::ostringstream s;
  s << "evaluate: best lag " << lag.best_lag << " (r = " << lag.best_r << ", " << to_string(c.transform)
    << "); Granger " << forward.cause << " -> " << forward.effect << " F = " << forward.f_value
    << " p = " << forward.p_value << "; reverse F = " << backward.f_value << " p = " << backward.p_value;
  res.summary = s.str();
  res.outputs = outputs;
  log << res.summary << "\n";
  return res;
}

/// Runs every stage in order. Evaluate runs only when a reference series is
/// configured. Returns the worst exit code seen.
inline std::vector<StageResult> run_all(const PipelineConfig& c, std::ostream& log = std::cout) {
  std::vector<StageResult> results;
  results.push_back(cmd_filter(c, log));
  results.push_back(cmd_classify(c, log));
  results.push_back(cmd_integrate(c, log));
  results.push_back(cmd_index(c, log));
  if (c.reference_path) results.push_back(cmd_evaluate(c, log));
  else log << "evaluate: skipped (no reference series configured)\n";
  return results;
}

}  // namespace psi
