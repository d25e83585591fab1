#include "tetradat/bridge.hpp"

#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csignal>
#include <cstdio>
#include <cstring>

extern char** environ;

namespace tetradat {

namespace {

constexpr char kAlphabet[] =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
  if (c >= 'A' && c <= 'Z') return c - 'A';
  if (c >= 'a' && c <= 'z') return c - 'a' + 26;
  if (c >= '0' && c <= '9') return c - '0' + 52;
  if (c == '+') return 62;
  if (c == '/') return 63;
  return -1;
}

std::vector<std::uint8_t> image_bytes(const Image& image) {
  std::vector<std::uint8_t> out(image.size());
  std::transform(image.values().begin(), image.values().end(), out.begin(),
                 [](double v) {
                   return static_cast<std::uint8_t>(
                       std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
                 });
  return out;
}

nlohmann::json image_payload(const Image& image) {
  return {{"height", image.height()},
          {"width", image.width()},
          {"data", base64_encode(image_bytes(image))}};
}

}  // namespace

std::string base64_encode(std::span<const std::uint8_t> bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (i + 1 == bytes.size()) {
    const std::uint32_t v = bytes[i] << 16;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += "==";
  } else if (i + 2 == bytes.size()) {
    const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += '=';
  }
  return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw std::invalid_argument("base64 length not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    std::array<int, 4> q{};
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = text[i + static_cast<std::size_t>(j)];
      if (c == '=' && i + 4 == text.size() && j >= 2) {
        q[static_cast<std::size_t>(j)] = 0;
        ++pad;
      } else {
        if (pad) throw std::invalid_argument("base64 padding in the middle");
        q[static_cast<std::size_t>(j)] = decode_char(c);
        if (q[static_cast<std::size_t>(j)] < 0)
          throw std::invalid_argument("invalid base64 character");
      }
    }
    const std::uint32_t v = (q[0] << 18) | (q[1] << 12) | (q[2] << 6) | q[3];
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v & 0xff));
  }
  return out;
}

nlohmann::json bridge_info_request() { return {{"op", "info"}}; }

nlohmann::json bridge_predict_request(const Image& image) {
  return {{"op", "predict"}, {"image", image_payload(image)}};
}

nlohmann::json bridge_gradient_request(const Image& image, int class_index) {
  return {{"op", "gradient"},
          {"image", image_payload(image)},
          {"class_index", class_index}};
}

struct BridgeClassifier::Process {
  pid_t pid = -1;
  std::FILE* to_child = nullptr;
  std::FILE* from_child = nullptr;

  explicit Process(const std::string& command) {
    std::signal(SIGPIPE, SIG_IGN);
    int in_pipe[2], out_pipe[2];
    if (pipe(in_pipe) != 0) throw TransportError("pipe() failed");
    if (pipe(out_pipe) != 0) {
      close(in_pipe[0]);
      close(in_pipe[1]);
      throw TransportError("pipe() failed");
    }
    posix_spawn_file_actions_t actions;
    posix_spawn_file_actions_init(&actions);
    posix_spawn_file_actions_adddup2(&actions, in_pipe[0], STDIN_FILENO);
    posix_spawn_file_actions_adddup2(&actions, out_pipe[1], STDOUT_FILENO);
    posix_spawn_file_actions_addclose(&actions, in_pipe[1]);
    posix_spawn_file_actions_addclose(&actions, out_pipe[0]);
    const char* argv[] = {"/bin/sh", "-c", command.c_str(), nullptr};
    const int rc = posix_spawn(&pid, "/bin/sh", &actions, nullptr,
                               const_cast<char* const*>(argv), environ);
    posix_spawn_file_actions_destroy(&actions);
    close(in_pipe[0]);
    close(out_pipe[1]);
    if (rc != 0) {
      close(in_pipe[1]);
      close(out_pipe[0]);
      throw TransportError("failed to start bridge: " + std::string(std::strerror(rc)));
    }
    to_child = fdopen(in_pipe[1], "w");
    from_child = fdopen(out_pipe[0], "r");
  }

  ~Process() {
    if (to_child) std::fclose(to_child);
    if (from_child) std::fclose(from_child);
    if (pid > 0) {
      int status = 0;
      if (waitpid(pid, &status, WNOHANG) == 0) {
        kill(pid, SIGTERM);
        waitpid(pid, &status, 0);
      }
    }
  }

  std::string round_trip(const std::string& line) {
    if (std::fputs(line.c_str(), to_child) == EOF || std::fputc('\n', to_child) == EOF ||
        std::fflush(to_child) != 0)
      throw TransportError("bridge closed its input");
    std::string reply;
    char buf[65536];
    for (;;) {
      if (!std::fgets(buf, sizeof buf, from_child))
        throw TransportError("bridge closed its output");
      reply += buf;
      if (!reply.empty() && reply.back() == '\n') break;
    }
    reply.pop_back();
    return reply;
  }
};

BridgeClassifier::BridgeClassifier(std::string command)
    : command_(std::move(command)) {}

BridgeClassifier::~BridgeClassifier() = default;

nlohmann::json BridgeClassifier::call(const nlohmann::json& request) const {
  if (!process_) process_ = std::make_unique<Process>(command_);
  std::string line;
  try {
    line = process_->round_trip(request.dump());
  } catch (const TransportError&) {
    process_.reset();
    throw;
  }
  auto reply = nlohmann::json::parse(line, nullptr, false);
  if (reply.is_discarded() || !reply.is_object()) {
    process_.reset();
    throw TransportError("malformed bridge reply");
  }
  if (reply.contains("error")) {
    const auto& err = reply["error"];
    throw ModelError("bridge error: " + (err.is_string() ? err.get<std::string>()
                                                         : err.dump()));
  }
  return reply;
}

const BridgeInfo& BridgeClassifier::info() const {
  if (!info_) {
    const auto reply = call(bridge_info_request());
    try {
      auto info = std::make_unique<BridgeInfo>();
      info->model_name = reply.at("model_name").get<std::string>();
      info->num_classes = reply.at("C").get<std::size_t>();
      info->input_height = reply.at("input").at("height").get<std::size_t>();
      info->input_width = reply.at("input").at("width").get<std::size_t>();
      info->preprocessing = reply.value("preprocessing", nlohmann::json::object());
      info_ = std::move(info);
    } catch (const nlohmann::json::exception& e) {
      throw TransportError(std::string("malformed info reply: ") + e.what());
    }
  }
  return *info_;
}

std::string BridgeClassifier::name() const { return "bridge:" + info().model_name; }

std::size_t BridgeClassifier::num_classes() const { return info().num_classes; }

Prediction BridgeClassifier::predict(const Image& image) const {
  const auto reply = call(bridge_predict_request(image));
  std::vector<double> probs;
  try {
    probs = reply.at("probs").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed predict reply: ") + e.what());
  }
  if (probs.size() != num_classes())
    throw TransportError("predict reply has the wrong number of classes");
  return make_prediction(std::move(probs));
}

std::vector<double> BridgeClassifier::input_gradient(const Image& image,
                                                     int class_index) const {
  if (class_index < 0 || static_cast<std::size_t>(class_index) >= num_classes())
    throw ModelError("class index out of range");
  const auto reply = call(bridge_gradient_request(image, class_index));
  std::vector<double> grad;
  try {
    grad = reply.at("grad").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw TransportError(std::string("malformed gradient reply: ") + e.what());
  }
  if (grad.size() != image.size())
    throw TransportError("gradient reply has the wrong length");
  return grad;
}

}  // namespace tetradat
