#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>

// Eigen must come first: <resolv.h>, pulled in by httplib, defines a `_res`
// macro that collides with Eigen parameter names.
#include "connkit/error.hpp"
#include "connkit/vlm.hpp"
#include "json_util.hpp"

#include <httplib.h>

namespace connkit::vlm {

using detail::json;

namespace {

std::optional<std::string> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return std::nullopt;
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string mime_for(const std::string& path) {
  auto dot = path.rfind('.');
  std::string ext = dot == std::string::npos ? "" : path.substr(dot + 1);
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (ext == "jpg" || ext == "jpeg") return "image/jpeg";
  if (ext == "webp") return "image/webp";
  return "image/png";
}

}  // namespace

HttpClient::HttpClient(HttpClientConfig config) : config_(std::move(config)) {
  if (config_.api_key.empty())
    if (const char* key = std::getenv("CONNKIT_MODEL_KEY")) config_.api_key = key;
  if (config_.endpoint.empty()) throw std::invalid_argument("HttpClient: endpoint is required");
}

std::string HttpClient::request_body(const HttpClientConfig& config, const PromptBundle& prompt) {
  json content = json::array();
  content.push_back({{"type", "text"}, {"text", prompt.text}});
  for (const auto& img : prompt.images) {
    std::optional<std::string> bytes = config.inline_images ? read_file(img.path) : std::nullopt;
    if (bytes) {
      content.push_back({{"type", "image_url"},
                         {"image_url", {{"url", "data:" + mime_for(img.path) + ";base64," +
                                                    httplib::detail::base64_encode(*bytes)}}}});
    } else {
      // Placeholder assets: pass the reference through as text.
      content.push_back({{"type", "text"}, {"text", "[" + img.role + " image: " + img.path + "]"}});
    }
  }
  json body = {{"model", config.model},
               {"temperature", 0},
               {"messages", json::array({{{"role", "user"}, {"content", content}}})}};
  return body.dump();
}

std::string HttpClient::response_text(std::string_view body) {
  json doc;
  try {
    doc = json::parse(body.begin(), body.end());
  } catch (const json::exception& e) {
    throw TransportError(std::string("malformed response body: ") + e.what(), "response");
  }
  if (auto err = doc.find("error"); err != doc.end()) throw TransportError("model error: " + err->dump(), "response");
  try {
    const json& content = doc.at("choices").at(0).at("message").at("content");
    if (content.is_string()) return content.get<std::string>();
    std::string out;
    for (const auto& part : content)
      if (part.value("type", "") == "text") out += part.value("text", "");
    return out;
  } catch (const json::exception& e) {
    throw TransportError(std::string("unexpected response shape: ") + e.what(), "response");
  }
}

std::string HttpClient::send(const PromptBundle& prompt) {
  static const std::regex url(R"(^(https?://[^/]+)(/.*)?$)");
  std::smatch m;
  if (!std::regex_match(config_.endpoint, m, url)) throw TransportError("malformed endpoint URL", config_.endpoint);
  const std::string path = m[2].matched ? m[2].str() : "/";

  httplib::Client cli(m[1].str());
  const auto secs = static_cast<time_t>(config_.timeout.count());
  cli.set_connection_timeout(secs, 0);
  cli.set_read_timeout(secs, 0);
  cli.set_write_timeout(secs, 0);
  httplib::Headers headers;
  if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

  auto res = cli.Post(path, headers, request_body(config_, prompt), "application/json");
  if (!res) throw TransportError("request failed: " + httplib::to_string(res.error()), config_.endpoint);
  if (res->status != 200)
    throw TransportError("HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200), config_.endpoint);
  return response_text(res->body);
}

}  // namespace connkit::vlm
