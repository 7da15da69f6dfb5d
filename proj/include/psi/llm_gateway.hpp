#pragma once

#include <atomic>
#include <chrono>
#include <cmath>
#include <fstream>
#include <ctime>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "psi/common.hpp"
#include "psi/io.hpp"
#include "psi/prompts.hpp"

namespace psi {

struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 256;

  json to_json() const { return json{{"max_tokens", max_tokens}, {"temperature", temperature}}; }
  std::string digest() const { return sha256_hex(to_json().dump()); }
};

struct ChatRequest {
  std::string system;
  std::string user;
  DecodingParams params;
};

/// Digest of the full prompt. With an empty system text this is the SHA-256
/// of the user text alone, which is what fixture replies are named after.
inline std::string prompt_digest(const ChatRequest& req) {
  if (req.system.empty()) return sha256_hex(req.user);
  return sha256_hex(req.system + std::string(1, '\0') + req.user);
}

struct CacheKey {
  std::string model_id;
  std::string prompt_digest;
  std::string params_digest;

  std::string str() const { return sha256_hex(model_id + '\n' + prompt_digest + '\n' + params_digest); }
  bool operator==(const CacheKey&) const = default;
};

inline CacheKey make_cache_key(const std::string& model_id, const ChatRequest& req) {
  return CacheKey{model_id, prompt_digest(req), req.params.digest()};
}

struct TransportError : Error {
  TransportError(const std::string& what, bool retryable) : Error(what), retryable(retryable) {}
  bool retryable;
};

/// Minimal provider contract: system + user text in, reply text out.
class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual std::string complete(const ChatRequest& req) = 0;
  /// Model string used in cache keys.
  virtual std::string model_id() const = 0;
};

/// Serves canned replies from `{dir}/{prompt_digest}.txt`. A missing file is
/// a non-retryable transport error.
class FixtureClient : public ChatClient {
 public:
  FixtureClient(fs::path dir, std::string model) : dir_(std::move(dir)), model_(std::move(model)) {}

  std::string complete(const ChatRequest& req) override {
    calls_.fetch_add(1);
    auto path = dir_ / (prompt_digest(req) + ".txt");
    if (!fs::exists(path)) throw TransportError("no fixture reply " + path.string(), false);
    return read_file(path);
  }
  std::string model_id() const override { return model_; }
  std::size_t calls() const { return calls_.load(); }

 private:
  fs::path dir_;
  std::string model_;
  std::atomic<std::size_t> calls_{0};
};

// ---------------------------------------------------------------------------
// Response cache
// ---------------------------------------------------------------------------

/// Append-only JSONL cache `{key, model_id, prompt_digest, reply, timestamp}`.
/// Lookups and inserts are thread-safe; on load, later lines win.
class ResponseCache {
 public:
  ResponseCache() = default;  // in-memory only
  explicit ResponseCache(fs::path path) : path_(std::move(path)) {
    if (!path_->empty() && fs::exists(*path_)) {
      for_each_jsonl(*path_, [&](const json& obj, std::size_t line) {
        try {
          entries_[obj.at("key").get<std::string>()] = obj.at("reply").get<std::string>();
        } catch (const json::exception& e) {
          throw ParseError("cache: " + std::string(e.what()), line);
        }
      });
    }
  }

  std::optional<std::string> get(const CacheKey& key) const {
    std::lock_guard lock(mu_);
    if (auto it = entries_.find(key.str()); it != entries_.end()) return it->second;
    return std::nullopt;
  }

  void put(const CacheKey& key, const std::string& reply) {
    std::lock_guard lock(mu_);
    entries_[key.str()] = reply;
    if (!path_) return;
    if (path_->has_parent_path()) fs::create_directories(path_->parent_path());
    std::ofstream out(*path_, std::ios::binary | std::ios::app);
    if (!out) throw IoError("cannot append to cache " + path_->string());
    json row{{"key", key.str()},
             {"model_id", key.model_id},
             {"prompt_digest", key.prompt_digest},
             {"reply", reply},
             {"timestamp", static_cast<std::int64_t>(std::time(nullptr))}};
    out << row.dump() << '\n';
  }

  std::size_t size() const {
    std::lock_guard lock(mu_);
    return entries_.size();
  }

 private:
  std::optional<fs::path> path_;
  mutable std::mutex mu_;
  std::map<std::string, std::string> entries_;
};

// ---------------------------------------------------------------------------
// Batch dispatch
// ---------------------------------------------------------------------------

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_delay{500};
  double backoff = 2.0;
  std::chrono::milliseconds max_delay{30000};

  std::chrono::milliseconds delay_before(int attempt) const {  // attempt >= 2
    double ms = static_cast<double>(initial_delay.count()) * std::pow(backoff, attempt - 2);
    return std::chrono::milliseconds(static_cast<long long>(std::min(ms, static_cast<double>(max_delay.count()))));
  }
};

struct BatchItem {
  std::optional<ModelJudgment> judgment;
  std::string reply;
  std::string error;  // empty on success
  bool from_cache = false;
  int attempts = 0;

  bool ok() const { return judgment.has_value(); }
};

struct BatchOptions {
  std::size_t max_in_flight = 4;
  RetryPolicy retry;
  std::string judgment_model_id;  // stamped on parsed judgments; defaults to the client's model id
  const PromptLanguage* language = nullptr;
  std::function<void(std::chrono::milliseconds)> sleep = [](std::chrono::milliseconds d) {
    std::this_thread::sleep_for(d);
  };
};

/// Sends every request (cache first), parses replies for `task` and returns
/// one item per request in input order. Failures are per item.
inline std::vector<BatchItem> classify_batch(ChatClient& client, const std::vector<ChatRequest>& requests,
                                             PromptTask task, ResponseCache* cache, const BatchOptions& opts = {}) {
  std::vector<BatchItem> out(requests.size());
  const std::string judged_by = opts.judgment_model_id.empty() ? client.model_id() : opts.judgment_model_id;
  const PromptLanguage& lang = opts.language ? *opts.language : PromptLanguage::english();

  auto run_one = [&](std::size_t i) {
    auto& item = out[i];
    const auto& req = requests[i];
    const auto key = make_cache_key(client.model_id(), req);
    std::optional<std::string> reply = cache ? cache->get(key) : std::nullopt;
    if (reply) {
      item.from_cache = true;
    } else {
      for (int attempt = 1; attempt <= std::max(1, opts.retry.max_attempts); ++attempt) {
        item.attempts = attempt;
        if (attempt > 1) opts.sleep(opts.retry.delay_before(attempt));
        try {
          reply = client.complete(req);
          item.error.clear();
          break;
        } catch (const TransportError& e) {
          item.error = e.what();
          if (!e.retryable) break;
        } catch (const std::exception& e) {
          item.error = e.what();
          break;
        }
      }
      if (!reply) return;
      if (cache) cache->put(key, *reply);
    }
    item.reply = *reply;
    try {
      item.judgment = parse_judgment(*reply, task, judged_by, lang);
    } catch (const Error& e) {
      item.error = e.what();
    }
  };

  const std::size_t workers = std::max<std::size_t>(1, std::min(opts.max_in_flight, requests.size()));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i; (i = next.fetch_add(1)) < requests.size();) {
      try {
        run_one(i);
      } catch (const std::exception& e) {
        out[i].judgment.reset();
        out[i].error = e.what();
      }
    }
  };
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  return out;
}

}  // namespace psi
