#pragma once

#include <chrono>
#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

namespace lamar {

enum class VlmVerdict { kTruthful, kFalsified };

std::string to_string(VlmVerdict verdict);
VlmVerdict parse_verdict(const std::string& text);

// Manipulator / detector pair behind the prompt-scoring loop. Implementations
// report failures by throwing lamar::Error with code kClient.
class VlmClient {
 public:
  virtual ~VlmClient() = default;
  virtual std::string generate(const std::string& image, const std::string& caption,
                               const std::string& prompt_id) = 0;
  virtual VlmVerdict detect(const std::string& image, const std::string& caption,
                            const std::string& prompt_id) = 0;
};

// Deterministic stand-in. generate() tags the caption with the prompt id;
// detect() answers from per-image scripts, falling back to a seeded hash
// against a rate.
class ScriptedVlmClient : public VlmClient {
 public:
  struct Script {
    std::optional<std::set<std::string>> images;  // images answered "falsified"
    double rate = 0.0;  // fraction answered "falsified" when images is absent
  };

  explicit ScriptedVlmClient(std::uint64_t seed = 0) : seed_(seed) {}

  // Behaviour on untouched (truthful) captions.
  void set_truthful_script(Script s) { truthful_ = std::move(s); }
  // Behaviour on captions produced with the given generation prompt.
  void set_prompt_script(const std::string& prompt_id, Script s) {
    prompts_[prompt_id] = std::move(s);
  }
  // Calls that should fail before succeeding, keyed by image ref.
  void set_failures(const std::string& image, int count) { failures_[image] = count; }

  std::string generate(const std::string& image, const std::string& caption,
                       const std::string& prompt_id) override;
  VlmVerdict detect(const std::string& image, const std::string& caption,
                    const std::string& prompt_id) override;

  // {"seed", "truthful": script, "prompts": {id: script}}, script = {"images": [...]} | {"rate": r}.
  static ScriptedVlmClient from_json(const nlohmann::json& j);

 private:
  bool answer(const Script& s, const std::string& image, const std::string& tag) const;
  void maybe_fail(const std::string& image);

  std::uint64_t seed_;
  Script truthful_;
  std::map<std::string, Script> prompts_;
  std::map<std::string, int> failures_;
};

// JSON-lines protocol over a pair of streams. One request line per call:
//   {"op":"generate"|"detect","image":..,"caption":..,"prompt_id":..}
// answered by {"caption":..} or {"verdict":"truthful"|"falsified"}, or
// {"error":{"code":..,"message":..}}.
class StreamVlmClient : public VlmClient {
 public:
  StreamVlmClient(std::istream& in, std::ostream& out) : in_(in), out_(out) {}

  std::string generate(const std::string& image, const std::string& caption,
                       const std::string& prompt_id) override;
  VlmVerdict detect(const std::string& image, const std::string& caption,
                    const std::string& prompt_id) override;

 private:
  nlohmann::json call(const nlohmann::json& request);

  std::istream& in_;
  std::ostream& out_;
};

// Runs a server command as a child process and speaks the protocol over its
// stdin/stdout. A call that exceeds the timeout kills and restarts the child.
class ProcessVlmClient : public VlmClient {
 public:
  ProcessVlmClient(std::vector<std::string> argv, std::chrono::milliseconds timeout);
  ~ProcessVlmClient() override;
  ProcessVlmClient(const ProcessVlmClient&) = delete;
  ProcessVlmClient& operator=(const ProcessVlmClient&) = delete;

  std::string generate(const std::string& image, const std::string& caption,
                       const std::string& prompt_id) override;
  VlmVerdict detect(const std::string& image, const std::string& caption,
                    const std::string& prompt_id) override;

 private:
  nlohmann::json call(const nlohmann::json& request);
  void start();
  void stop();

  std::vector<std::string> argv_;
  std::chrono::milliseconds timeout_;
  int pid_ = -1;
  int to_child_ = -1;
  int from_child_ = -1;
  std::string buffer_;
};

nlohmann::json make_request(const std::string& op, const std::string& image,
                            const std::string& caption, const std::string& prompt_id);

// Answers one protocol line. Malformed requests get a "bad_request" error object.
std::string handle_request_line(VlmClient& client, const std::string& line);
// Serves requests line by line until end of input. Returns the number handled.
std::size_t serve_jsonl(VlmClient& client, std::istream& in, std::ostream& out);

}  // namespace lamar
