#include "lamar/vlm_client.hpp"

#include <poll.h>
#include <signal.h>
#include <sys/socket.h>
#include <sys/wait.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <istream>
#include <ostream>

#include "binary_io.hpp"
#include "lamar/error.hpp"

namespace lamar {

namespace {

constexpr const char* kGenTag = "<gen:";

[[noreturn]] void client_error(const std::string& what) {
  throw Error(ErrorCode::kClient, "vlm client: " + what);
}

nlohmann::json error_object(const std::string& code, const std::string& message) {
  return {{"error", {{"code", code}, {"message", message}}}};
}

// Response validation shared by every transport.
nlohmann::json check_response(const std::string& line, const std::string& op) {
  nlohmann::json resp;
  try {
    resp = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    client_error("malformed response line");
  }
  if (resp.contains("error")) {
    const auto& e = resp["error"];
    client_error("server error " + e.value("code", std::string("unknown")) + ": " +
                 e.value("message", std::string()));
  }
  const char* key = op == "generate" ? "caption" : "verdict";
  if (!resp.contains(key) || !resp[key].is_string()) {
    client_error(std::string("response lacks string field '") + key + "'");
  }
  return resp;
}

}  // namespace

std::string to_string(VlmVerdict v) { return v == VlmVerdict::kTruthful ? "truthful" : "falsified"; }

VlmVerdict parse_verdict(const std::string& text) {
  if (text == "truthful") return VlmVerdict::kTruthful;
  if (text == "falsified") return VlmVerdict::kFalsified;
  throw Error(ErrorCode::kClient, "vlm client: unknown verdict '" + text + "'");
}

nlohmann::json make_request(const std::string& op, const std::string& image,
                            const std::string& caption, const std::string& prompt_id) {
  return {{"op", op}, {"image", image}, {"caption", caption}, {"prompt_id", prompt_id}};
}

// --- scripted mock ---

void ScriptedVlmClient::maybe_fail(const std::string& image) {
  auto it = failures_.find(image);
  if (it != failures_.end() && it->second > 0) {
    --it->second;
    client_error("scripted failure for image '" + image + "'");
  }
}

std::string ScriptedVlmClient::generate(const std::string& image, const std::string& caption,
                                        const std::string& prompt_id) {
  maybe_fail(image);
  return std::string(kGenTag) + prompt_id + "> " + caption;
}

bool ScriptedVlmClient::answer(const Script& s, const std::string& image,
                               const std::string& tag) const {
  if (s.images) return s.images->count(image) != 0;
  std::uint64_t h = io::fnv1a64(std::to_string(seed_) + '\x1f' + tag + '\x1f' + image);
  // splitmix64 finalizer; raw FNV high bits barely move between similar keys
  h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
  h = (h ^ (h >> 27)) * 0x94d049bb133111ebULL;
  h ^= h >> 31;
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < s.rate;
}

VlmVerdict ScriptedVlmClient::detect(const std::string& image, const std::string& caption,
                                     const std::string&) {
  maybe_fail(image);
  if (caption.rfind(kGenTag, 0) == 0) {
    const auto close = caption.find('>');
    const std::string prompt = caption.substr(5, close == std::string::npos ? 0 : close - 5);
    auto it = prompts_.find(prompt);
    const Script none;
    const bool hit = answer(it == prompts_.end() ? none : it->second, image, "gen:" + prompt);
    return hit ? VlmVerdict::kFalsified : VlmVerdict::kTruthful;
  }
  return answer(truthful_, image, "truthful") ? VlmVerdict::kFalsified : VlmVerdict::kTruthful;
}

ScriptedVlmClient ScriptedVlmClient::from_json(const nlohmann::json& j) {
  const auto script = [](const nlohmann::json& s) {
    Script out;
    if (s.contains("images")) out.images = s.at("images").get<std::set<std::string>>();
    out.rate = s.value("rate", 0.0);
    return out;
  };
  try {
    ScriptedVlmClient c(j.value("seed", std::uint64_t{0}));
    if (j.contains("truthful")) c.set_truthful_script(script(j.at("truthful")));
    if (j.contains("prompts")) {
      for (const auto& [id, s] : j.at("prompts").items()) c.set_prompt_script(id, script(s));
    }
    return c;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kInvalidArgument, std::string("mock script: ") + e.what());
  }
}

// --- stream transport ---

nlohmann::json StreamVlmClient::call(const nlohmann::json& request) {
  out_ << request.dump() << '\n' << std::flush;
  if (!out_) client_error("write to server failed");
  std::string line;
  if (!std::getline(in_, line)) client_error("server closed the stream");
  return check_response(line, request.at("op").get<std::string>());
}

std::string StreamVlmClient::generate(const std::string& image, const std::string& caption,
                                      const std::string& prompt_id) {
  return call(make_request("generate", image, caption, prompt_id))["caption"].get<std::string>();
}

VlmVerdict StreamVlmClient::detect(const std::string& image, const std::string& caption,
                                   const std::string& prompt_id) {
  return parse_verdict(
      call(make_request("detect", image, caption, prompt_id))["verdict"].get<std::string>());
}

// --- child process transport ---

ProcessVlmClient::ProcessVlmClient(std::vector<std::string> argv,
                                   std::chrono::milliseconds timeout)
    : argv_(std::move(argv)), timeout_(timeout) {
  if (argv_.empty()) {
    throw Error(ErrorCode::kInvalidArgument, "vlm client: empty server command");
  }
  start();
}

ProcessVlmClient::~ProcessVlmClient() { stop(); }

void ProcessVlmClient::start() {
  int fds[2];
  if (socketpair(AF_UNIX, SOCK_STREAM, 0, fds) != 0) {
    client_error(std::string("socketpair: ") + std::strerror(errno));
  }
  const pid_t pid = fork();
  if (pid < 0) {
    close(fds[0]);
    close(fds[1]);
    client_error(std::string("fork: ") + std::strerror(errno));
  }
  if (pid == 0) {
    dup2(fds[1], STDIN_FILENO);
    dup2(fds[1], STDOUT_FILENO);
    close(fds[0]);
    close(fds[1]);
    std::vector<char*> args;
    for (auto& a : argv_) args.push_back(a.data());
    args.push_back(nullptr);
    execvp(args[0], args.data());
    _exit(127);
  }
  close(fds[1]);
  pid_ = pid;
  to_child_ = from_child_ = fds[0];
  buffer_.clear();
}

void ProcessVlmClient::stop() {
  if (pid_ < 0) return;
  close(to_child_);
  kill(pid_, SIGTERM);
  waitpid(pid_, nullptr, 0);
  pid_ = -1;
  to_child_ = from_child_ = -1;
}

nlohmann::json ProcessVlmClient::call(const nlohmann::json& request) {
  if (pid_ < 0) start();
  const std::string line = request.dump() + '\n';
  for (std::size_t sent = 0; sent < line.size();) {
    const ssize_t n = send(to_child_, line.data() + sent, line.size() - sent, MSG_NOSIGNAL);
    if (n < 0) {
      if (errno == EINTR) continue;
      stop();
      client_error(std::string("write to server failed: ") + std::strerror(errno));
    }
    sent += static_cast<std::size_t>(n);
  }
  const auto deadline = std::chrono::steady_clock::now() + timeout_;
  for (;;) {
    const auto nl = buffer_.find('\n');
    if (nl != std::string::npos) {
      std::string reply = buffer_.substr(0, nl);
      buffer_.erase(0, nl + 1);
      return check_response(reply, request.at("op").get<std::string>());
    }
    const auto left = std::chrono::duration_cast<std::chrono::milliseconds>(
        deadline - std::chrono::steady_clock::now());
    if (left.count() <= 0) {
      stop();
      client_error("timed out after " + std::to_string(timeout_.count()) + " ms");
    }
    pollfd pfd{from_child_, POLLIN, 0};
    const int ready = poll(&pfd, 1, static_cast<int>(left.count()));
    if (ready < 0 && errno != EINTR) {
      stop();
      client_error(std::string("poll: ") + std::strerror(errno));
    }
    if (ready <= 0) continue;
    char chunk[4096];
    const ssize_t n = read(from_child_, chunk, sizeof chunk);
    if (n <= 0) {
      stop();
      client_error("server closed the connection");
    }
    buffer_.append(chunk, static_cast<std::size_t>(n));
  }
}

std::string ProcessVlmClient::generate(const std::string& image, const std::string& caption,
                                       const std::string& prompt_id) {
  return call(make_request("generate", image, caption, prompt_id))["caption"].get<std::string>();
}

VlmVerdict ProcessVlmClient::detect(const std::string& image, const std::string& caption,
                                    const std::string& prompt_id) {
  return parse_verdict(
      call(make_request("detect", image, caption, prompt_id))["verdict"].get<std::string>());
}

// --- server side ---

std::string handle_request_line(VlmClient& client, const std::string& line) {
  nlohmann::json req;
  try {
    req = nlohmann::json::parse(line);
  } catch (const nlohmann::json::exception&) {
    return error_object("bad_request", "request is not valid JSON").dump();
  }
  const auto field = [&](const char* key) -> const std::string* {
    if (!req.is_object() || !req.contains(key) || !req[key].is_string()) return nullptr;
    return req[key].get_ptr<const std::string*>();
  };
  const std::string* op = field("op");
  const std::string* image = field("image");
  const std::string* caption = field("caption");
  const std::string* prompt = field("prompt_id");
  if (!op || !image || !caption || !prompt) {
    return error_object("bad_request", "request needs string fields op, image, caption, prompt_id")
        .dump();
  }
  try {
    if (*op == "generate") {
      return nlohmann::json{{"caption", client.generate(*image, *caption, *prompt)}}.dump();
    }
    if (*op == "detect") {
      return nlohmann::json{{"verdict", to_string(client.detect(*image, *caption, *prompt))}}
          .dump();
    }
    return error_object("bad_request", "unknown op '" + *op + "'").dump();
  } catch (const std::exception& e) {
    return error_object("model_error", e.what()).dump();
  }
}

std::size_t serve_jsonl(VlmClient& client, std::istream& in, std::ostream& out) {
  std::size_t handled = 0;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    out << handle_request_line(client, line) << '\n' << std::flush;
    ++handled;
  }
  return handled;
}

}  // namespace lamar
