#pragma once

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include "httplib.h"

#include <chrono>
#include <cstdlib>
#include <string>

#include "psi/llm_gateway.hpp"

namespace psi {

enum class Provider { OpenAi, Anthropic, Gemini };

inline Provider parse_provider(std::string_view s) {
  auto k = to_lower_ascii(s);
  if (k == "openai") return Provider::OpenAi;
  if (k == "anthropic") return Provider::Anthropic;
  if (k == "gemini" || k == "google") return Provider::Gemini;
  throw ConfigError("unknown provider \"" + std::string(s) + "\"");
}

struct EndpointSpec {
  Provider provider = Provider::OpenAi;
  std::string base_url;  // e.g. https://api.openai.com
  std::string model;
  std::string api_key;
  std::chrono::seconds timeout{60};
};

/// Request path and JSON body for one provider. Kept separate from the
/// transport so the wire format can be checked without a server.
struct WireRequest {
  std::string path;
  httplib::Headers headers;
  json body;
};

inline WireRequest make_wire_request(const EndpointSpec& ep, const ChatRequest& req) {
  WireRequest w;
  switch (ep.provider) {
    case Provider::OpenAi: {
      w.path = "/v1/chat/completions";
      if (!ep.api_key.empty()) w.headers.emplace("Authorization", "Bearer " + ep.api_key);
      json messages = json::array();
      if (!req.system.empty()) messages.push_back({{"role", "system"}, {"content", req.system}});
      messages.push_back({{"role", "user"}, {"content", req.user}});
      w.body = {{"model", ep.model},
                {"messages", messages},
                {"temperature", req.params.temperature},
                {"max_tokens", req.params.max_tokens}};
      break;
    }
    case Provider::Anthropic: {
      w.path = "/v1/messages";
      if (!ep.api_key.empty()) w.headers.emplace("x-api-key", ep.api_key);
      w.headers.emplace("anthropic-version", "2023-06-01");
      w.body = {{"model", ep.model},
                {"max_tokens", req.params.max_tokens},
                {"temperature", req.params.temperature},
                {"messages", json::array({{{"role", "user"}, {"content", req.user}}})}};
      if (!req.system.empty()) w.body["system"] = req.system;
      break;
    }
    case Provider::Gemini: {
      w.path = "/v1beta/models/" + ep.model + ":generateContent";
      if (!ep.api_key.empty()) w.headers.emplace("x-goog-api-key", ep.api_key);
      w.body = {{"contents", json::array({{{"role", "user"}, {"parts", json::array({{{"text", req.user}}})}}})},
                {"generationConfig",
                 {{"temperature", req.params.temperature}, {"maxOutputTokens", req.params.max_tokens}}}};
      if (!req.system.empty()) w.body["systemInstruction"] = {{"parts", json::array({{{"text", req.system}}})}};
      break;
    }
  }
  return w;
}

inline std::string extract_reply_text(Provider provider, const json& body) {
  try {
    switch (provider) {
      case Provider::OpenAi:
        return body.at("choices").at(0).at("message").at("content").get<std::string>();
      case Provider::Anthropic: {
        std::string text;
        for (const auto& block : body.at("content"))
          if (block.value("type", "") == "text") text += block.at("text").get<std::string>();
        return text;
      }
      case Provider::Gemini: {
        std::string text;
        for (const auto& part : body.at("candidates").at(0).at("content").at("parts"))
          if (part.contains("text")) text += part["text"].get<std::string>();
        return text;
      }
    }
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected response shape: ") + e.what(), false);
  }
  return {};
}

/// Live chat endpoint over HTTP(S). 429 and 5xx responses and connection
/// failures are retryable; other non-200 statuses are not.
class HttpChatClient : public ChatClient {
 public:
  explicit HttpChatClient(EndpointSpec ep) : ep_(std::move(ep)) {}

  std::string complete(const ChatRequest& req) override {
    auto wire = make_wire_request(ep_, req);
    httplib::Client cli(ep_.base_url);
    cli.set_connection_timeout(ep_.timeout);
    cli.set_read_timeout(ep_.timeout);
    cli.set_write_timeout(ep_.timeout);
    auto res = cli.Post(wire.path, wire.headers, wire.body.dump(), "application/json");
    if (!res) throw TransportError("request to " + ep_.base_url + " failed: " + httplib::to_string(res.error()), true);
    if (res->status != 200) {
      bool retryable = res->status == 429 || res->status >= 500;
      throw TransportError("HTTP " + std::to_string(res->status) + " from " + ep_.base_url + ": " +
                               res->body.substr(0, 300),
                           retryable);
    }
    json body;
    try {
      body = json::parse(res->body);
    } catch (const json::exception& e) {
      throw TransportError(std::string("invalid JSON response: ") + e.what(), false);
    }
    return extract_reply_text(ep_.provider, body);
  }

  std::string model_id() const override { return ep_.model; }

 private:
  EndpointSpec ep_;
};

}  // namespace psi
