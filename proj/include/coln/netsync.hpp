#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "coln/combiner.hpp"
#include "coln/orchestrator.hpp"

namespace coln::net {

// Wire protocol: TCP, newline-delimited JSON, one message per line, reals at
// shortest round-trip precision. SUBMIT carries per-layer weight arrays and
// the corpus size; COMBINED carries the combined arrays. No message type has
// a field that can hold feature or label data.

enum class MessageType { hello, welcome, init_model, submit, combined, done, error };

const char *to_string(MessageType t);

struct Message {
  MessageType type = MessageType::error;
  std::string session_id;
  std::uint64_t round = 0;
  std::string host_id;              // hello, submit
  std::string architecture_digest;  // hello
  std::uint64_t corpus_size = 0;    // submit
  std::vector<std::vector<double>> layers;  // init_model, submit, combined
  std::string error_text;           // error

  bool operator==(const Message &) const = default;
};

/// JSON keys allowed in a frame of the given type (schema audits iterate this).
std::vector<std::string> allowed_fields(MessageType t);

/// One text frame, terminated by '\n'.
std::string encode_message(const Message &msg);

/// Decodes a single frame (without the trailing newline). Strict: unknown or
/// missing keys are errors. Throws ProtocolError naming the byte offset for
/// malformed JSON.
Message decode_frame(const std::string &frame);

struct SessionSpec {
  std::string session_id;
  std::size_t expected_hosts = 2;
  ArchitectureDescriptor architecture;
  CombineConfig combine;
  std::size_t max_rounds = 30;
  double stop_epsilon = 1e-3;
  std::size_t stop_patience = 3;
  /// Initial parameters: generated from this seed unless preloaded ones are given.
  std::uint64_t init_seed = 0;
  std::optional<ParameterSet> preloaded_params;
  /// Optional synchronizer-side evaluation set; enables per-round accuracy
  /// records and early stopping.
  std::optional<Dataset> eval_data;
  /// When set, per-round combined models and rounds.csv land here (also on abort).
  std::string out_dir;
};

struct SessionResult {
  std::vector<RoundRecord> records;  // combined-model metrics only
  ParameterSet final_combined;
  std::vector<ParameterSet> per_round_combined;  // index = round, [0] = init
  std::size_t rounds_run = 0;
};

/// Runs one full session: accepts exactly expected_hosts HELLOs, distributes
/// the initial model, then per round waits for every SUBMIT (barrier),
/// combines, and broadcasts COMBINED; finishes with DONE. Extra HELLOs get
/// ERROR "session full"; duplicate host ids and architecture mismatches get
/// ERROR and a closed connection; a mid-round disconnect aborts the session
/// after persisting partial results.
/// `on_listening` fires with the bound port once accepting (port 0 picks one).
SessionResult serve(const SessionSpec &spec, const std::string &bind_address,
                    std::uint16_t port,
                    const std::function<void(std::uint16_t)> &on_listening = {});

struct JoinConfig {
  std::string server_host = "127.0.0.1";
  std::uint16_t server_port = 0;
  std::string session_id;
  std::string host_id;
  ArchitectureDescriptor architecture;
  Dataset data;
  TrainConfig train;
  int round_timeout_seconds = 300;
};

struct JoinResult {
  ParameterSet final_params;
  std::size_t rounds_completed = 0;
};

/// Host side: HELLO, adopt INIT_MODEL, then loop train / SUBMIT / adopt
/// COMBINED until DONE. Per-round training seeds follow round_train_seed, so
/// a networked session reproduces the in-process simulator bit-for-bit.
JoinResult join(const JoinConfig &config);

}  // namespace coln::net
