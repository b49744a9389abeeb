#include "coln/netsync.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <condition_variable>
#include <cstring>
#include <deque>
#include <mutex>
#include <set>
#include <thread>

#include <json.hpp>

#include "coln/errors.hpp"
#include "coln/trainer.hpp"

namespace coln::net {

using nlohmann::json;

const char *to_string(MessageType t) {
  switch (t) {
    case MessageType::hello: return "HELLO";
    case MessageType::welcome: return "WELCOME";
    case MessageType::init_model: return "INIT_MODEL";
    case MessageType::submit: return "SUBMIT";
    case MessageType::combined: return "COMBINED";
    case MessageType::done: return "DONE";
    case MessageType::error: return "ERROR";
  }
  return "ERROR";
}

namespace {

std::optional<MessageType> type_from_string(const std::string &s) {
  if (s == "HELLO") return MessageType::hello;
  if (s == "WELCOME") return MessageType::welcome;
  if (s == "INIT_MODEL") return MessageType::init_model;
  if (s == "SUBMIT") return MessageType::submit;
  if (s == "COMBINED") return MessageType::combined;
  if (s == "DONE") return MessageType::done;
  if (s == "ERROR") return MessageType::error;
  return std::nullopt;
}

}  // namespace

std::vector<std::string> allowed_fields(MessageType t) {
  switch (t) {
    case MessageType::hello:
      return {"type", "session_id", "host_id", "architecture_digest"};
    case MessageType::welcome:
      return {"type", "session_id", "round"};
    case MessageType::init_model:
      return {"type", "session_id", "round", "layers"};
    case MessageType::submit:
      return {"type", "session_id", "round", "host_id", "corpus_size", "layers"};
    case MessageType::combined:
      return {"type", "session_id", "round", "layers"};
    case MessageType::done:
      return {"type", "session_id", "round"};
    case MessageType::error:
      return {"type", "session_id", "error_text"};
  }
  return {};
}

std::string encode_message(const Message &msg) {
  json j{{"type", to_string(msg.type)}, {"session_id", msg.session_id}};
  switch (msg.type) {
    case MessageType::hello:
      j["host_id"] = msg.host_id;
      j["architecture_digest"] = msg.architecture_digest;
      break;
    case MessageType::welcome:
    case MessageType::done:
      j["round"] = msg.round;
      break;
    case MessageType::init_model:
    case MessageType::combined:
      j["round"] = msg.round;
      j["layers"] = msg.layers;
      break;
    case MessageType::submit:
      j["round"] = msg.round;
      j["host_id"] = msg.host_id;
      j["corpus_size"] = msg.corpus_size;
      j["layers"] = msg.layers;
      break;
    case MessageType::error:
      j["error_text"] = msg.error_text;
      break;
  }
  return j.dump() + "\n";
}

Message decode_frame(const std::string &frame) {
  json j;
  try {
    j = json::parse(frame);
  } catch (const json::parse_error &e) {
    throw ProtocolError("malformed frame at byte " + std::to_string(e.byte) +
                        ": " + e.what());
  }
  if (!j.is_object()) throw ProtocolError("frame is not a JSON object");
  const auto type = type_from_string(j.value("type", ""));
  if (!type) throw ProtocolError("unknown message type");

  const auto allowed = allowed_fields(*type);
  for (const auto &[key, value] : j.items()) {
    (void)value;
    if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
      throw ProtocolError("unexpected field '" + key + "' in " +
                          to_string(*type) + " frame");
  }

  try {
    Message msg;
    msg.type = *type;
    msg.session_id = j.at("session_id").get<std::string>();
    switch (*type) {
      case MessageType::hello:
        msg.host_id = j.at("host_id").get<std::string>();
        msg.architecture_digest = j.at("architecture_digest").get<std::string>();
        break;
      case MessageType::welcome:
      case MessageType::done:
        msg.round = j.at("round").get<std::uint64_t>();
        break;
      case MessageType::init_model:
      case MessageType::combined:
        msg.round = j.at("round").get<std::uint64_t>();
        msg.layers = j.at("layers").get<std::vector<std::vector<double>>>();
        break;
      case MessageType::submit:
        msg.round = j.at("round").get<std::uint64_t>();
        msg.host_id = j.at("host_id").get<std::string>();
        msg.corpus_size = j.at("corpus_size").get<std::uint64_t>();
        msg.layers = j.at("layers").get<std::vector<std::vector<double>>>();
        break;
      case MessageType::error:
        msg.error_text = j.at("error_text").get<std::string>();
        break;
    }
    return msg;
  } catch (const json::exception &e) {
    throw ProtocolError(std::string("bad frame payload: ") + e.what());
  }
}

// --- socket plumbing ---------------------------------------------------------

namespace {

class Socket {
public:
  Socket() = default;
  explicit Socket(int fd) : fd_(fd) {}
  Socket(Socket &&other) noexcept : fd_(other.fd_) { other.fd_ = -1; }
  Socket &operator=(Socket &&other) noexcept {
    if (this != &other) {
      close_fd();
      fd_ = other.fd_;
      other.fd_ = -1;
    }
    return *this;
  }
  ~Socket() { close_fd(); }

  int fd() const { return fd_; }
  bool valid() const { return fd_ >= 0; }
  void close_fd() {
    if (fd_ >= 0) {
      ::shutdown(fd_, SHUT_RDWR);
      ::close(fd_);
      fd_ = -1;
    }
  }

private:
  int fd_ = -1;
};

void send_all(int fd, const std::string &data) {
  std::size_t sent = 0;
  while (sent < data.size()) {
    const ssize_t n = ::send(fd, data.data() + sent, data.size() - sent,
                             MSG_NOSIGNAL);
    if (n <= 0) throw ProtocolError("connection write failed");
    sent += static_cast<std::size_t>(n);
  }
}

/// Buffered newline framing over a socket.
class LineReader {
public:
  explicit LineReader(int fd) : fd_(fd) {}

  /// Next complete line, or nullopt on orderly EOF with an empty buffer.
  /// Throws ProtocolError on read errors/timeouts or EOF mid-frame.
  std::optional<std::string> read_line() {
    for (;;) {
      const auto pos = buffer_.find('\n');
      if (pos != std::string::npos) {
        std::string line = buffer_.substr(0, pos);
        buffer_.erase(0, pos + 1);
        return line;
      }
      char chunk[4096];
      const ssize_t n = ::recv(fd_, chunk, sizeof(chunk), 0);
      if (n == 0) {
        if (!buffer_.empty()) throw ProtocolError("connection closed mid-frame");
        return std::nullopt;
      }
      if (n < 0) throw ProtocolError("connection read failed or timed out");
      buffer_.append(chunk, static_cast<std::size_t>(n));
    }
  }

  /// A complete line already sitting in the buffer, without touching the socket.
  std::optional<std::string> buffered_line() {
    const auto pos = buffer_.find('\n');
    if (pos == std::string::npos) return std::nullopt;
    std::string line = buffer_.substr(0, pos);
    buffer_.erase(0, pos + 1);
    return line;
  }

private:
  int fd_;
  std::string buffer_;
};

std::vector<std::vector<double>> layers_of(const ParameterSet &params) {
  return params.per_layer;
}

ParameterSet params_from_layers(const ArchitectureDescriptor &arch,
                                std::vector<std::vector<double>> layers) {
  ParameterSet p;
  p.architecture = arch;
  p.per_layer = std::move(layers);
  validate_params(p);
  return p;
}

}  // namespace

// --- server ------------------------------------------------------------------

namespace {

struct QueueEvent {
  enum class Kind { submit, disconnect } kind;
  std::size_t conn;
  Message message;
};

struct Connection {
  Socket socket;
  std::string host_id;
  std::thread reader;
};

}  // namespace

SessionResult serve(const SessionSpec &spec, const std::string &bind_address,
                    std::uint16_t port,
                    const std::function<void(std::uint16_t)> &on_listening) {
  validate_architecture(spec.architecture);
  if (spec.expected_hosts < 2)
    throw ConfigError("expected_hosts must be >= 2");

  const ParameterSet init =
      spec.preloaded_params ? *spec.preloaded_params
                            : init_params(spec.architecture, spec.init_seed);
  if (!(init.architecture == spec.architecture))
    throw ConfigError("preloaded model does not match the session architecture");

  Socket listener(::socket(AF_INET, SOCK_STREAM, 0));
  if (!listener.valid()) throw ProtocolError("cannot create listen socket");
  const int one = 1;
  ::setsockopt(listener.fd(), SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  if (::inet_pton(AF_INET, bind_address.c_str(), &addr.sin_addr) != 1)
    throw ConfigError("bad bind address: " + bind_address);
  if (::bind(listener.fd(), reinterpret_cast<sockaddr *>(&addr), sizeof(addr)) != 0)
    throw ProtocolError("bind failed on " + bind_address + ":" +
                        std::to_string(port));
  if (::listen(listener.fd(), 16) != 0) throw ProtocolError("listen failed");
  socklen_t len = sizeof(addr);
  ::getsockname(listener.fd(), reinterpret_cast<sockaddr *>(&addr), &len);
  const std::uint16_t bound_port = ntohs(addr.sin_port);
  if (on_listening) on_listening(bound_port);

  const std::string expected_digest = architecture_digest(spec.architecture);

  std::mutex mtx;
  std::condition_variable cv;
  std::vector<Connection> connections;  // guarded by mtx until session starts
  std::deque<QueueEvent> queue;
  bool accepting = true;

  auto start_reader = [&](std::size_t conn_index) {
    connections[conn_index].reader = std::thread([&, conn_index]() {
      LineReader reader(connections[conn_index].socket.fd());
      try {
        for (;;) {
          auto line = reader.read_line();
          if (!line) break;
          Message msg = decode_frame(*line);
          if (msg.type != MessageType::submit) continue;  // hosts only submit
          std::lock_guard lock(mtx);
          queue.push_back({QueueEvent::Kind::submit, conn_index, std::move(msg)});
          cv.notify_all();
        }
      } catch (const std::exception &) {
        // fall through to the disconnect event
      }
      std::lock_guard lock(mtx);
      queue.push_back({QueueEvent::Kind::disconnect, conn_index, {}});
      cv.notify_all();
    });
  };

  const std::string init_frame = encode_message(
      {MessageType::init_model, spec.session_id, 0, "", "", 0, layers_of(init), ""});

  std::thread acceptor([&]() {
    for (;;) {
      const int fd = ::accept(listener.fd(), nullptr, nullptr);
      if (fd < 0) break;  // listener closed, session over
      Socket conn(fd);
      try {
        LineReader reader(fd);
        const auto line = reader.read_line();
        if (!line) continue;
        const Message hello = decode_frame(*line);
        if (hello.type != MessageType::hello) {
          send_all(fd, encode_message({MessageType::error, spec.session_id, 0,
                                       "", "", 0, {}, "expected HELLO"}));
          continue;
        }
        if (hello.session_id != spec.session_id) {
          send_all(fd, encode_message({MessageType::error, spec.session_id, 0,
                                       "", "", 0, {}, "unknown session"}));
          continue;
        }
        if (hello.architecture_digest != expected_digest) {
          send_all(fd,
                   encode_message({MessageType::error, spec.session_id, 0, "",
                                   "", 0, {}, "architecture mismatch"}));
          continue;
        }
        std::unique_lock lock(mtx);
        if (!accepting || connections.size() >= spec.expected_hosts) {
          lock.unlock();
          send_all(fd, encode_message({MessageType::error, spec.session_id, 0,
                                       "", "", 0, {}, "session full"}));
          continue;
        }
        bool duplicate = false;
        for (const auto &existing : connections)
          if (existing.host_id == hello.host_id) duplicate = true;
        if (duplicate) {
          lock.unlock();
          send_all(fd,
                   encode_message({MessageType::error, spec.session_id, 0, "",
                                   "", 0, {}, "duplicate host_id"}));
          continue;
        }
        send_all(fd, encode_message({MessageType::welcome, spec.session_id, 0,
                                     "", "", 0, {}, ""}));
        send_all(fd, init_frame);
        connections.push_back({std::move(conn), hello.host_id, {}});
        start_reader(connections.size() - 1);
        cv.notify_all();
      } catch (const std::exception &) {
        // bad handshake, drop the connection
      }
    }
  });

  SessionResult result;
  result.per_round_combined.push_back(init);

  auto persist = [&]() {
    if (spec.out_dir.empty()) return;
    write_rounds_csv(result.records, spec.out_dir + "/rounds.csv");
    for (std::size_t r = 0; r < result.per_round_combined.size(); ++r)
      save_params(result.per_round_combined[r],
                  spec.out_dir + "/combined_round_" + std::to_string(r) + ".json");
  };

  bool shut_down = false;
  auto shutdown_session = [&]() {
    if (shut_down) return;
    shut_down = true;
    {
      std::lock_guard lock(mtx);
      accepting = false;
    }
    listener.close_fd();  // stops the acceptor
    acceptor.join();
    for (auto &conn : connections) conn.socket.close_fd();
    for (auto &conn : connections)
      if (conn.reader.joinable()) conn.reader.join();
  };

  try {
    // Barrier 0: all hosts joined.
    {
      std::unique_lock lock(mtx);
      cv.wait(lock, [&] { return connections.size() == spec.expected_hosts; });
    }

    if (spec.eval_data) {
      RoundRecord rec;
      rec.round = 0;
      const EvalReport report = evaluate(init, *spec.eval_data);
      rec.combined_accuracy = report.accuracy;
      rec.combined_loss = report.loss;
      result.records.push_back(std::move(rec));
    }

    ParameterSet current = init;
    double previous_accuracy =
        result.records.empty() ? 0.0 : result.records.back().combined_accuracy;
    std::size_t stall_count = 0;

    for (std::uint64_t round = 1; round <= spec.max_rounds; ++round) {
      // Barrier: one valid SUBMIT per host for this round.
      std::vector<std::optional<HostSubmission>> submissions(connections.size());
      std::vector<std::string> digests(connections.size());
      std::size_t received = 0;
      while (received < connections.size()) {
        QueueEvent event;
        {
          std::unique_lock lock(mtx);
          cv.wait(lock, [&] { return !queue.empty(); });
          event = std::move(queue.front());
          queue.pop_front();
        }
        if (event.kind == QueueEvent::Kind::disconnect) {
          persist();
          shutdown_session();
          throw ProtocolError("host '" + connections[event.conn].host_id +
                              "' disconnected during round " +
                              std::to_string(round) +
                              "; partial results persisted");
        }
        Message &msg = event.message;
        const int fd = connections[event.conn].socket.fd();
        if (msg.round != round) {
          send_all(fd, encode_message({MessageType::error, spec.session_id, 0,
                                       "", "", 0, {},
                                       "stale round " + std::to_string(msg.round) +
                                           ", expected " + std::to_string(round)}));
          continue;
        }
        ParameterSet params;
        try {
          params = params_from_layers(spec.architecture, std::move(msg.layers));
        } catch (const std::exception &) {
          send_all(fd, encode_message({MessageType::error, spec.session_id, 0,
                                       "", "", 0, {},
                                       "architecture mismatch in SUBMIT"}));
          persist();
          shutdown_session();
          throw ProtocolError("host '" + connections[event.conn].host_id +
                              "' submitted mismatched parameters");
        }
        const std::string digest = params_digest(params);
        if (submissions[event.conn]) {
          // duplicate SUBMIT: idempotent when identical, fatal otherwise
          if (digests[event.conn] == digest) continue;
          persist();
          shutdown_session();
          throw ProtocolError("host '" + connections[event.conn].host_id +
                              "' re-submitted different parameters for round " +
                              std::to_string(round));
        }
        submissions[event.conn] = HostSubmission{
            connections[event.conn].host_id, round, msg.corpus_size,
            std::move(params)};
        digests[event.conn] = digest;
        ++received;
      }

      std::vector<HostSubmission> batch;
      batch.reserve(submissions.size());
      for (auto &sub : submissions) batch.push_back(std::move(*sub));
      CombineResult combined = combine(batch, spec.combine, round);

      RoundRecord rec;
      rec.round = round;
      rec.distance_report = std::move(combined.report);
      if (spec.eval_data) {
        const EvalReport report = evaluate(combined.params, *spec.eval_data);
        rec.combined_accuracy = report.accuracy;
        rec.combined_loss = report.loss;
      }
      result.records.push_back(std::move(rec));
      result.per_round_combined.push_back(combined.params);
      result.rounds_run = round;

      const std::string frame =
          encode_message({MessageType::combined, spec.session_id, round, "", "",
                          0, layers_of(combined.params), ""});
      bool stop = round == spec.max_rounds;
      if (spec.eval_data && round >= 2) {
        const double improvement =
            result.records.back().combined_accuracy - previous_accuracy;
        if (improvement < spec.stop_epsilon)
          ++stall_count;
        else
          stall_count = 0;
        if (stall_count >= spec.stop_patience) stop = true;
      }
      previous_accuracy = result.records.back().combined_accuracy;

      // Final COMBINED and DONE go out in one write so hosts see them together.
      std::string payload = frame;
      if (stop)
        payload += encode_message(
            {MessageType::done, spec.session_id, round, "", "", 0, {}, ""});
      for (auto &conn : connections) send_all(conn.socket.fd(), payload);

      current = std::move(combined.params);
      if (stop) break;
    }

    result.final_combined = current;
    persist();
  } catch (...) {
    shutdown_session();
    throw;
  }
  shutdown_session();
  return result;
}

// --- client ------------------------------------------------------------------

JoinResult join(const JoinConfig &config) {
  validate_architecture(config.architecture);
  validate_dataset(config.data);

  Socket sock(::socket(AF_INET, SOCK_STREAM, 0));
  if (!sock.valid()) throw ProtocolError("cannot create socket");
  timeval tv{};
  tv.tv_sec = config.round_timeout_seconds;
  ::setsockopt(sock.fd(), SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(config.server_port);
  if (::inet_pton(AF_INET, config.server_host.c_str(), &addr.sin_addr) != 1)
    throw ConfigError("bad server address: " + config.server_host);
  if (::connect(sock.fd(), reinterpret_cast<sockaddr *>(&addr), sizeof(addr)) != 0)
    throw ProtocolError("cannot connect to " + config.server_host + ":" +
                        std::to_string(config.server_port));

  LineReader reader(sock.fd());
  auto expect = [&](std::initializer_list<MessageType> types) {
    const auto line = reader.read_line();
    if (!line) throw ProtocolError("server closed the connection");
    Message msg = decode_frame(*line);
    if (msg.type == MessageType::error)
      throw ProtocolError("server error: " + msg.error_text);
    for (MessageType t : types)
      if (msg.type == t) return msg;
    throw ProtocolError(std::string("unexpected ") + to_string(msg.type) +
                        " from server");
  };

  send_all(sock.fd(),
           encode_message({MessageType::hello, config.session_id, 0,
                           config.host_id,
                           architecture_digest(config.architecture), 0, {}, ""}));
  expect({MessageType::welcome});
  Message init_msg = expect({MessageType::init_model});
  ParameterSet current =
      params_from_layers(config.architecture, std::move(init_msg.layers));

  JoinResult result;
  for (std::uint64_t round = 1;; ++round) {
    TrainConfig cfg = config.train;
    cfg.seed = round_train_seed(config.train.seed, round);
    ParameterSet trained = cfg.epochs == 0 || config.data.n_samples == 0
                               ? current
                               : train(current, config.data, cfg);
    send_all(sock.fd(),
             encode_message({MessageType::submit, config.session_id, round,
                             config.host_id, "", config.data.n_samples,
                             layers_of(trained), ""}));
    Message reply = expect({MessageType::combined, MessageType::done});
    if (reply.type == MessageType::done) break;
    if (reply.round != round)
      throw ProtocolError("combined model for unexpected round " +
                          std::to_string(reply.round));
    current = params_from_layers(config.architecture, std::move(reply.layers));
    result.rounds_completed = round;

    // DONE often rides in the same packet as the final COMBINED; drain it
    // before starting another training round.
    if (const auto buffered = reader.buffered_line()) {
      const Message next = decode_frame(*buffered);
      if (next.type == MessageType::done) break;
      if (next.type == MessageType::error)
        throw ProtocolError("server error: " + next.error_text);
    }
  }

  result.final_params = std::move(current);
  return result;
}

}  // namespace coln::net
