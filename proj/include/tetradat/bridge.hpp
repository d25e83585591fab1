#pragma once

// Client for out-of-process classifiers speaking the line-delimited JSON
// bridge protocol (docs/bridge_protocol.md) over a child's stdin/stdout.

#include <cstdint>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "tetradat/model.hpp"

namespace tetradat {

std::string base64_encode(std::span<const std::uint8_t> bytes);
std::vector<std::uint8_t> base64_decode(std::string_view text);

/// Request objects exactly as written on the wire.
nlohmann::json bridge_info_request();
nlohmann::json bridge_predict_request(const Image& image);
nlohmann::json bridge_gradient_request(const Image& image, int class_index);

struct BridgeInfo {
  std::string model_name;
  std::size_t num_classes = 0;
  std::size_t input_height = 0;
  std::size_t input_width = 0;
  nlohmann::json preprocessing;
};

/// A classifier served by a child process started with `/bin/sh -c command`.
/// Transport failures raise TransportError and drop the child; the next call
/// starts a fresh one. Error replies raise ModelError.
class BridgeClassifier final : public Classifier {
 public:
  explicit BridgeClassifier(std::string command);
  ~BridgeClassifier() override;
  BridgeClassifier(const BridgeClassifier&) = delete;
  BridgeClassifier& operator=(const BridgeClassifier&) = delete;

  std::string name() const override;
  std::size_t num_classes() const override;
  Prediction predict(const Image& image) const override;

  /// Gradients come from the served model when it supports the op.
  bool differentiable() const override { return true; }
  std::vector<double> input_gradient(const Image& image,
                                     int class_index) const override;

  const BridgeInfo& info() const;
  /// Sends one request and returns the parsed reply.
  nlohmann::json call(const nlohmann::json& request) const;

 private:
  struct Process;
  std::string command_;
  mutable std::unique_ptr<Process> process_;
  mutable std::unique_ptr<BridgeInfo> info_;
};

}  // namespace tetradat
