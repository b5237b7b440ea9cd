#include "protofed/federation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace protofed {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.10g", v);
  return buf;
}

}  // namespace

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::sgd;
  if (name == "adam") return OptimizerKind::adam;
  throw ConfigError("unknown optimizer: " + name);
}

SecondTerm second_term_from_string(const std::string& name) {
  if (name == "none") return SecondTerm::none;
  if (name == "l2") return SecondTerm::l2;
  if (name == "contrastive") return SecondTerm::contrastive;
  throw ConfigError("unknown loss second term: " + name);
}

FedMode fed_mode_from_string(const std::string& name) {
  if (name == "fedhpb") return FedMode::fedhpb;
  if (name == "fedavg") return FedMode::fedavg;
  throw ConfigError("unknown mode: " + name);
}

std::string to_string(OptimizerKind k) {
  return k == OptimizerKind::sgd ? "sgd" : "adam";
}
std::string to_string(SecondTerm t) {
  switch (t) {
    case SecondTerm::none: return "none";
    case SecondTerm::l2: return "l2";
    default: return "contrastive";
  }
}
std::string to_string(FedMode m) { return m == FedMode::fedhpb ? "fedhpb" : "fedavg"; }

void RoundConfig::validate() const {
  if (epochs < 1) throw ConfigError("rounds: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("rounds: batch_size must be >= 1");
  if (lr < 0.0) throw ConfigError("rounds: learning rate must be >= 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("rounds: momentum must be in [0, 1)");
  if (clip_lstm && clip_norm <= 0.0) throw ConfigError("rounds: clip_norm must be positive");
  if (eval_batch < 1) throw ConfigError("rounds: eval_batch must be >= 1");
  loss.validate();
}

ClientState::ClientState(std::uint32_t id_, ClientDataset data_,
                         const LcnnConfig& model_cfg, std::uint64_t experiment_seed)
    : id(id_),
      data(std::move(data_)),
      model(model_cfg, derive_seed(experiment_seed, 0x100 + id_)),
      counts(data.train_counts()),
      order_rng(derive_seed(experiment_seed, 0x300 + id_)) {}

std::vector<ClientState> make_clients(std::vector<ClientDataset> datasets,
                                      const LcnnConfig& model_cfg,
                                      std::uint64_t seed) {
  std::vector<ClientState> clients;
  clients.reserve(datasets.size());
  for (auto& ds : datasets) {
    // Wire client ids are 1-based; id 0 marks server-origin frames.
    const auto id = static_cast<std::uint32_t>(ds.client_id) + 1;
    clients.emplace_back(id, std::move(ds), model_cfg, seed);
  }
  return clients;
}

LocalUpdateResult local_update(ClientState& client, const PrototypeSet& global,
                               const RoundConfig& cfg) {
  if (client.fail_attempts > 0) {
    --client.fail_attempts;
    throw SessionError("injected client fault");
  }
  const auto& train = client.data.train;
  if (train.empty()) throw DataError("local_update: client training set is empty");

  const LcnnConfig& mc = client.model.config();
  const LossConfig& loss = cfg.loss;
  const ClassCounts counts = client.counts;

  bool active = false;
  switch (cfg.second_term) {
    case SecondTerm::none:
      break;
    case SecondTerm::contrastive:
      active = counts.both_present() && global.has(0) && global.has(1);
      break;
    case SecondTerm::l2:
      active = counts.both_present() && !global.empty();
      break;
  }
  const bool suppressed = cfg.second_term != SecondTerm::none && !active;
  const double lam = active ? loss.lambda : 0.0;
  const auto [w_pos, w_neg] = class_weights(counts, loss.gamma, loss.eps);
  const std::array<double, 2> pair_weight{w_pos, w_neg};

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});

  RunningMean final_epoch_mean;
  double loss_sum = 0.0;
  std::size_t batches = 0;
  std::vector<std::size_t> batch_idx;
  std::vector<double> term_grad;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    client.order_rng.shuffle(order);
    const bool final_epoch = epoch + 1 == cfg.epochs;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      batch_idx.assign(order.begin() + start, order.begin() + start + n);
      Tensor x = gather_batch(train, batch_idx, mc.window, mc.input_dim);
      std::vector<int> y = gather_labels(train, batch_idx);

      auto out = client.model.forward(x, Mode::train);
      if (final_epoch) final_epoch_mean.update(out.embeddings, y);

      Tensor dlogits;
      const double ls = supervised_loss(out.logits, y, counts, &dlogits);
      double batch_loss = ls;
      Tensor dembed;

      if (lam > 0.0) {
        const PrototypeSet batch_protos = compute_local_prototypes(out.embeddings, y);
        double second = 0.0;
        std::array<std::vector<double>, 2> dproto;
        for (int cls = 0; cls < 2; ++cls) {
          if (!batch_protos.has(cls)) continue;
          if (cfg.second_term == SecondTerm::contrastive) {
            const double term =
                contrastive_term(batch_protos.vec(cls), global.vec(cls),
                                 global.vec(1 - cls), loss.tau, loss.eps, &term_grad);
            const double w = pair_weight[static_cast<std::size_t>(cls)];
            second += w * term;
            dproto[static_cast<std::size_t>(cls)] = term_grad;
            for (double& g : dproto[static_cast<std::size_t>(cls)]) g *= w;
          } else if (global.has(cls)) {  // l2 distance per class present on both sides
            PrototypeSet one;
            one.set(cls, batch_protos.vec(cls), batch_protos.count(cls));
            std::array<std::vector<double>, 2> done;
            second += l2_proto_penalty(one, global, &done);
            dproto[static_cast<std::size_t>(cls)] =
                std::move(done[static_cast<std::size_t>(cls)]);
          }
        }
        batch_loss = total_loss(ls, second, lam);
        for (double& g : dlogits.data) g *= 1.0 - lam;
        dembed = Tensor({n, mc.embed_dim()});
        for (std::size_t i = 0; i < n; ++i) {
          const auto cls = static_cast<std::size_t>(y[i]);
          const auto& g = dproto[cls];
          if (g.empty()) continue;
          const double scale = lam / static_cast<double>(batch_protos.count(y[i]));
          for (std::size_t j = 0; j < g.size(); ++j) {
            dembed.data[i * g.size() + j] = scale * g[j];
          }
        }
      }

      client.model.backward(dlogits, dembed);
      if (cfg.clip_lstm) client.model.params().clip_grad_norm("lstm.", cfg.clip_norm);
      if (cfg.optimizer == OptimizerKind::sgd) {
        client.model.params().sgd_step(cfg.lr, cfg.momentum);
      } else {
        client.model.params().adam_step(cfg.lr, cfg.adam_beta1, cfg.adam_beta2,
                                        cfg.adam_eps);
      }
      loss_sum += batch_loss;
      ++batches;
    }
  }

  LocalUpdateResult result;
  result.prototypes = final_epoch_mean.finalize();
  result.mean_loss = loss_sum / static_cast<double>(batches);
  result.lambda_suppressed = suppressed;
  return result;
}

namespace {

// Plain cross entropy local training for the parameter-averaging baseline:
// balanced pseudo counts make every class weight exactly one.
double fedavg_local_train(ClientState& client, const RoundConfig& cfg) {
  if (client.fail_attempts > 0) {
    --client.fail_attempts;
    throw SessionError("injected client fault");
  }
  const auto& train = client.data.train;
  if (train.empty()) throw DataError("fedavg: client training set is empty");
  const LcnnConfig& mc = client.model.config();
  const ClassCounts unit{1, 1};

  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  double loss_sum = 0.0;
  std::size_t batches = 0;
  std::vector<std::size_t> batch_idx;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    client.order_rng.shuffle(order);
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t n = std::min(cfg.batch_size, order.size() - start);
      batch_idx.assign(order.begin() + start, order.begin() + start + n);
      Tensor x = gather_batch(train, batch_idx, mc.window, mc.input_dim);
      std::vector<int> y = gather_labels(train, batch_idx);
      auto out = client.model.forward(x, Mode::train);
      Tensor dlogits;
      loss_sum += supervised_loss(out.logits, y, unit, &dlogits);
      client.model.backward(dlogits);
      if (cfg.clip_lstm) client.model.params().clip_grad_norm("lstm.", cfg.clip_norm);
      if (cfg.optimizer == OptimizerKind::sgd) {
        client.model.params().sgd_step(cfg.lr, cfg.momentum);
      } else {
        client.model.params().adam_step(cfg.lr, cfg.adam_beta1, cfg.adam_beta2,
                                        cfg.adam_eps);
      }
      ++batches;
    }
  }
  return loss_sum / static_cast<double>(batches);
}

// Client side of one round: blocks for work, trains, uploads. Failures are
// reported as Error frames so the server can retry or exclude. Returns
// false once the finish control arrives.
bool client_service_one(ClientState& client, Session& session, const RoundConfig& cfg) {
  for (;;) {
    Message msg = session.recv();
    switch (msg.type) {
      case MsgType::round_control:
        if (msg.control == ControlCode::finish) return false;
        continue;  // retry marker: the rebroadcast follows
      case MsgType::global_broadcast: {
        const auto t0 = Clock::now();
        Message reply;
        reply.round = msg.round;
        reply.client_id = client.id;
        try {
          LocalUpdateResult result = local_update(client, msg.prototypes, cfg);
          client.last_loss = result.mean_loss;
          client.last_suppressed = result.lambda_suppressed;
          reply.type = MsgType::prototype_upload;
          reply.prototypes = std::move(result.prototypes);
        } catch (const Error& e) {
          reply.type = MsgType::error;
          reply.error_text = e.what();
        }
        client.last_wall_ms = ms_since(t0);
        session.send(reply);
        return true;
      }
      case MsgType::param_broadcast: {
        const auto t0 = Clock::now();
        Message reply;
        reply.round = msg.round;
        reply.client_id = client.id;
        try {
          client.model.params().load_flat(msg.params);
          client.last_loss = fedavg_local_train(client, cfg);
          client.last_suppressed = false;
          reply.type = MsgType::param_upload;
          reply.params = client.model.params().flatten();
          reply.sample_count = client.data.train.size();
        } catch (const Error& e) {
          reply.type = MsgType::error;
          reply.error_text = e.what();
        }
        client.last_wall_ms = ms_since(t0);
        session.send(reply);
        return true;
      }
      default:
        throw ProtocolError("client received unexpected message type");
    }
  }
}

void client_loop(ClientState& client, Session& session, const RoundConfig& cfg) {
  Message hello;
  hello.type = MsgType::round_control;
  hello.control = ControlCode::hello;
  hello.client_id = client.id;
  try {
    session.send(hello);
    while (client_service_one(client, session, cfg)) {
    }
  } catch (const SessionError&) {
    // server is gone; nothing left to do
  }
}

struct ServerSeat {
  std::uint32_t client_id = 0;
  std::unique_ptr<Session> session;
  Session::Counters mark;  // counter snapshot at the last round boundary
  bool alive = true;
};

TrainReport drive_rounds(std::vector<ClientState>& clients, const RoundConfig& cfg,
                         FedMode mode, std::vector<ServerSeat>& seats,
                         const std::function<void(std::size_t)>& service_inline) {
  const auto t_start = Clock::now();
  TrainReport report;
  report.mode = mode;
  report.client_count = clients.size();
  report.rounds_requested = cfg.rounds;

  std::map<std::uint32_t, ClientState*> by_id;
  for (auto& c : clients) by_id[c.id] = &c;

  // Parameter-averaging state (fedavg mode only).
  std::unique_ptr<LcnnModel> server_model;
  std::vector<double> global_params;
  std::uint64_t total_train = 0;
  if (mode == FedMode::fedavg) {
    server_model = std::make_unique<LcnnModel>(clients.front().model.config(),
                                               derive_seed(cfg.seed, 0x5e4));
    global_params = server_model->params().flatten();
    for (const auto& c : clients) total_train += c.data.train.size();
  }

  PrototypeSet global;

  for (std::uint32_t round = 1; round <= cfg.rounds; ++round) {
    Message bcast;
    bcast.round = round;
    bcast.client_id = 0;
    if (mode == FedMode::fedhpb) {
      bcast.type = MsgType::global_broadcast;
      bcast.prototypes = global;
    } else {
      bcast.type = MsgType::param_broadcast;
      bcast.params = global_params;
      bcast.sample_count = total_train;
    }

    for (auto& seat : seats) {
      if (!seat.alive) continue;
      try {
        seat.session->send(bcast);
      } catch (const SessionError&) {
        seat.alive = false;
      }
    }
    if (service_inline) {
      for (std::size_t i = 0; i < seats.size(); ++i) {
        if (seats[i].alive) service_inline(i);
      }
    }

    // Collect one upload per client, with a single retry on failure.
    std::vector<std::optional<Message>> uploads(seats.size());
    for (std::size_t i = 0; i < seats.size(); ++i) {
      ServerSeat& seat = seats[i];
      if (!seat.alive) continue;
      auto try_recv = [&]() -> std::optional<Message> {
        try {
          Message m = seat.session->recv();
          if (m.type == MsgType::error) return std::nullopt;
          return m;
        } catch (const SessionError&) {
          seat.alive = false;
          return std::nullopt;
        }
      };
      uploads[i] = try_recv();
      if (!uploads[i] && seat.alive) {
        Message retry;
        retry.type = MsgType::round_control;
        retry.control = ControlCode::retry;
        retry.round = round;
        try {
          seat.session->send(retry);
          seat.session->send(bcast);
          if (service_inline) service_inline(i);
          uploads[i] = try_recv();
        } catch (const SessionError&) {
          seat.alive = false;
        }
      }
    }

    // Aggregation in ascending client-id order (seats are sorted).
    if (mode == FedMode::fedhpb) {
      std::vector<std::pair<std::uint32_t, PrototypeSet>> locals;
      for (std::size_t i = 0; i < seats.size(); ++i) {
        if (uploads[i] && uploads[i]->type == MsgType::prototype_upload) {
          locals.emplace_back(seats[i].client_id, std::move(uploads[i]->prototypes));
        }
      }
      if (!locals.empty()) global = aggregate_global(locals, cfg.aggregation);
    } else {
      std::vector<std::pair<std::uint64_t, std::vector<double>>> param_uploads;
      for (std::size_t i = 0; i < seats.size(); ++i) {
        if (!uploads[i] || uploads[i]->type != MsgType::param_upload) continue;
        if (uploads[i]->params.size() != global_params.size()) {
          throw ProtocolError("param upload size mismatch from client " +
                              std::to_string(seats[i].client_id));
        }
        param_uploads.emplace_back(uploads[i]->sample_count,
                                   std::move(uploads[i]->params));
      }
      if (!param_uploads.empty()) {
        global_params = weighted_param_mean(param_uploads);
        server_model->params().load_flat(global_params);
      }
    }

    // Per-round evaluation and records.
    RoundSummary summary;
    summary.round = round;
    std::vector<std::pair<double, double>> per_client;
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < seats.size(); ++i) {
      ClientState& st = *by_id.at(seats[i].client_id);
      LcnnModel& eval_target = mode == FedMode::fedhpb ? st.model : *server_model;
      RoundClientRecord rec = evaluate_model(eval_target, st.data.test, cfg.eval_batch);
      rec.round = round;
      rec.client = seats[i].client_id;
      rec.train_loss = st.last_loss;
      rec.lambda_suppressed = st.last_suppressed;
      rec.excluded = !uploads[i].has_value();
      rec.wall_ms = st.last_wall_ms;
      const Session::Counters now = seats[i].session->counters();
      rec.upload_bytes = now.data_received - seats[i].mark.data_received;
      rec.download_bytes = now.data_sent - seats[i].mark.data_sent;
      seats[i].mark = now;
      per_client.emplace_back(rec.fbeta, rec.ba);
      loss_sum += rec.train_loss;
      report.records.push_back(std::move(rec));
    }
    const auto [mfb, mba] = macro_means(per_client);
    summary.mfbeta = mfb;
    summary.mba = mba;
    summary.mean_train_loss = loss_sum / static_cast<double>(seats.size());
    if (mode == FedMode::fedhpb) summary.global = global;
    report.rounds.push_back(std::move(summary));
  }

  Message finish;
  finish.type = MsgType::round_control;
  finish.control = ControlCode::finish;
  finish.round = cfg.rounds;
  for (auto& seat : seats) {
    if (!seat.alive) continue;
    try {
      seat.session->send(finish);
    } catch (const SessionError&) {
      seat.alive = false;
    }
  }

  for (const auto& r : report.rounds) {
    report.avg_mfbeta += r.mfbeta;
    report.avg_mba += r.mba;
  }
  if (!report.rounds.empty()) {
    report.avg_mfbeta /= static_cast<double>(report.rounds.size());
    report.avg_mba /= static_cast<double>(report.rounds.size());
  }
  for (const auto& seat : seats) {
    const Session::Counters c = seat.session->counters();
    report.upload_data_bytes += c.data_received;
    report.download_data_bytes += c.data_sent;
    report.control_bytes += c.control_sent + c.control_received;
  }
  report.wall_seconds = ms_since(t_start) / 1000.0;
  return report;
}

// Registration barrier: every client announces itself before round 1.
void expect_hello(ServerSeat& seat) {
  const Message hello = seat.session->recv();
  if (hello.type != MsgType::round_control || hello.control != ControlCode::hello) {
    throw ProtocolError("expected hello from client " + std::to_string(seat.client_id));
  }
  if (hello.client_id != seat.client_id) {
    throw ProtocolError("hello carries client id " + std::to_string(hello.client_id) +
                        ", expected " + std::to_string(seat.client_id));
  }
}

TrainReport run_protocol(std::vector<ClientState>& clients, const RoundConfig& cfg,
                         FedMode mode, const RunOptions& options) {
  cfg.validate();
  if (clients.empty()) throw ConfigError("experiment needs at least one client");
  {
    std::map<std::uint32_t, int> seen;
    for (const auto& c : clients) {
      if (c.id == 0) throw ConfigError("client id 0 is reserved for the server");
      if (++seen[c.id] > 1) throw ConfigError("duplicate client id " + std::to_string(c.id));
    }
  }

  std::vector<std::size_t> order(clients.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return clients[a].id < clients[b].id;
  });

  if (options.carrier == CarrierKind::inproc) {
    std::vector<ServerSeat> seats;
    std::vector<std::unique_ptr<Session>> client_sessions(clients.size());
    seats.reserve(clients.size());
    for (std::size_t pos : order) {
      auto [server_side, client_side] = make_inproc_pair();
      seats.push_back(ServerSeat{clients[pos].id, std::move(server_side), {}, true});
      client_sessions[pos] = std::move(client_side);
    }

    if (!options.parallel_clients) {
      // Sequential deterministic mode: clients are serviced inline.
      for (std::size_t pos : order) {
        Message hello;
        hello.type = MsgType::round_control;
        hello.control = ControlCode::hello;
        hello.client_id = clients[pos].id;
        client_sessions[pos]->send(hello);
      }
      for (auto& seat : seats) expect_hello(seat);
      auto service = [&](std::size_t seat_index) {
        const std::size_t pos = order[seat_index];
        client_service_one(clients[pos], *client_sessions[pos], cfg);
      };
      TrainReport report = drive_rounds(clients, cfg, mode, seats, service);
      for (std::size_t pos : order) {
        client_service_one(clients[pos], *client_sessions[pos], cfg);  // consume finish
      }
      return report;
    }

    std::vector<std::thread> workers;
    workers.reserve(clients.size());
    for (std::size_t pos : order) {
      workers.emplace_back([&, pos] {
        client_loop(clients[pos], *client_sessions[pos], cfg);
      });
    }
    for (auto& seat : seats) expect_hello(seat);
    TrainReport report = drive_rounds(clients, cfg, mode, seats, nullptr);
    for (auto& w : workers) w.join();
    return report;
  }

  // TCP loopback carrier: server accepts and registers by hello; duplicate
  // client ids are rejected with an Error frame.
  TcpListener listener(options.tcp_port);
  std::vector<std::thread> workers;
  workers.reserve(clients.size());
  std::vector<std::unique_ptr<Session>> client_sessions(clients.size());
  for (std::size_t pos : order) {
    client_sessions[pos] = tcp_connect("127.0.0.1", listener.port());
    workers.emplace_back([&, pos] {
      client_loop(clients[pos], *client_sessions[pos], cfg);
    });
  }

  std::map<std::uint32_t, std::unique_ptr<Session>> registry =
      accept_clients(listener, clients.size());

  std::vector<ServerSeat> seats;
  seats.reserve(clients.size());
  for (auto& [id, session] : registry) {
    seats.push_back(ServerSeat{id, std::move(session), {}, true});
  }
  TrainReport report = drive_rounds(clients, cfg, mode, seats, nullptr);
  for (auto& w : workers) w.join();
  listener.close();
  return report;
}

}  // namespace

TrainReport server_run(std::vector<ClientState>& clients, const RoundConfig& cfg,
                       const RunOptions& options) {
  return run_protocol(clients, cfg, FedMode::fedhpb, options);
}

TrainReport fedavg_run(std::vector<ClientState>& clients, const RoundConfig& cfg,
                       const RunOptions& options) {
  return run_protocol(clients, cfg, FedMode::fedavg, options);
}

std::vector<double> weighted_param_mean(
    const std::vector<std::pair<std::uint64_t, std::vector<double>>>& uploads) {
  if (uploads.empty()) throw ConfigError("weighted_param_mean: no uploads");
  const std::size_t n = uploads.front().second.size();
  std::vector<double> acc(n, 0.0);
  double total = 0.0;
  for (const auto& [count, params] : uploads) {
    if (params.size() != n) {
      throw DimensionError("weighted_param_mean: parameter vector size mismatch");
    }
    const auto w = static_cast<double>(count);
    total += w;
    for (std::size_t j = 0; j < n; ++j) acc[j] += w * params[j];
  }
  if (total == 0.0) throw ConfigError("weighted_param_mean: zero total weight");
  for (double& v : acc) v /= total;
  return acc;
}

RoundClientRecord evaluate_model(LcnnModel& model,
                                 const std::vector<WindowSample>& test,
                                 std::size_t eval_batch) {
  if (test.empty()) throw DataError("evaluate_model: empty test set");
  const LcnnConfig& mc = model.config();
  ConfusionCounts total;
  std::vector<std::size_t> indices;
  for (std::size_t start = 0; start < test.size(); start += eval_batch) {
    const std::size_t n = std::min(eval_batch, test.size() - start);
    indices.resize(n);
    std::iota(indices.begin(), indices.end(), start);
    Tensor x = gather_batch(test, indices, mc.window, mc.input_dim);
    const std::vector<int> y = gather_labels(test, indices);
    const Tensor logits = model.classify(x, Mode::eval);
    total += confusion_from_logits(logits, y);
  }
  RoundClientRecord rec;
  rec.confusion = total;
  const auto [p, r] = precision_recall(total);
  rec.precision = p;
  rec.recall = r;
  rec.fbeta = f_beta(p, r, 2.0);
  rec.ba = balanced_accuracy(total);
  return rec;
}

namespace {

void append_metric_row(std::string& out, const std::string& round,
                       const std::string& client, const RoundClientRecord* rec,
                       double fbeta, double ba) {
  out += round + "," + client + ",";
  if (rec) {
    out += std::to_string(rec->confusion.tp) + "," + std::to_string(rec->confusion.tn) +
           "," + std::to_string(rec->confusion.fp) + "," +
           std::to_string(rec->confusion.fn) + "," + format_double(rec->precision) +
           "," + format_double(rec->recall);
  } else {
    out += ",,,,,";
  }
  out += "," + format_double(fbeta) + "," + format_double(ba) + "\n";
}

nlohmann::json record_json(const RoundClientRecord& r, bool include_timing) {
  nlohmann::json j{{"round", r.round},
                   {"client", r.client},
                   {"train_loss", r.train_loss},
                   {"lambda_suppressed", r.lambda_suppressed},
                   {"excluded", r.excluded},
                   {"upload_bytes", r.upload_bytes},
                   {"download_bytes", r.download_bytes},
                   {"tp", r.confusion.tp},
                   {"tn", r.confusion.tn},
                   {"fp", r.confusion.fp},
                   {"fn", r.confusion.fn},
                   {"precision", r.precision},
                   {"recall", r.recall},
                   {"fbeta", r.fbeta},
                   {"ba", r.ba}};
  if (include_timing) j["wall_ms"] = r.wall_ms;
  return j;
}

nlohmann::json prototype_json(const PrototypeSet& set) {
  nlohmann::json j = nlohmann::json::array();
  for (int cls = 0; cls < PrototypeSet::kNumClasses; ++cls) {
    if (!set.has(cls)) continue;
    j.push_back({{"class", cls}, {"count", set.count(cls)}, {"vector", set.vec(cls)}});
  }
  return j;
}

nlohmann::json report_json(const TrainReport& rep, bool include_timing) {
  nlohmann::json j;
  j["mode"] = to_string(rep.mode);
  j["clients"] = rep.client_count;
  j["rounds_requested"] = rep.rounds_requested;
  j["avg_mfbeta"] = rep.avg_mfbeta;
  j["avg_mba"] = rep.avg_mba;
  j["upload_data_bytes"] = rep.upload_data_bytes;
  j["download_data_bytes"] = rep.download_data_bytes;
  if (include_timing) {
    j["control_bytes"] = rep.control_bytes;
    j["wall_seconds"] = rep.wall_seconds;
  }
  auto& recs = j["records"] = nlohmann::json::array();
  for (const auto& r : rep.records) recs.push_back(record_json(r, include_timing));
  auto& rounds = j["rounds"] = nlohmann::json::array();
  for (const auto& r : rep.rounds) {
    rounds.push_back({{"round", r.round},
                      {"mean_train_loss", r.mean_train_loss},
                      {"mfbeta", r.mfbeta},
                      {"mba", r.mba},
                      {"global_prototypes", prototype_json(r.global)}});
  }
  return j;
}

}  // namespace

std::string TrainReport::metrics_csv() const {
  std::string out = "round,client,tp,tn,fp,fn,precision,recall,fbeta,ba\n";
  for (const auto& r : rounds) {
    for (const auto& rec : records) {
      if (rec.round != r.round) continue;
      append_metric_row(out, std::to_string(rec.round), std::to_string(rec.client),
                        &rec, rec.fbeta, rec.ba);
    }
    append_metric_row(out, std::to_string(r.round), "mean", nullptr, r.mfbeta, r.mba);
  }
  append_metric_row(out, "all", "mean", nullptr, avg_mfbeta, avg_mba);
  return out;
}

std::string TrainReport::trajectory_csv() const {
  std::string out = "round,mean_train_loss,mfbeta,mba\n";
  for (const auto& r : rounds) {
    out += std::to_string(r.round) + "," + format_double(r.mean_train_loss) + "," +
           format_double(r.mfbeta) + "," + format_double(r.mba) + "\n";
  }
  return out;
}

std::string TrainReport::to_json() const { return report_json(*this, true).dump(2); }

std::string TrainReport::stable_json() const {
  return report_json(*this, false).dump(2);
}

}  // namespace protofed
