#pragma once

// HTTP plumbing for the three daemons and their clients. Bodies are the
// wire encoding (UTF-8 JSON); malformed requests get 400 with an error
// message, protocol outcomes (fulfilled, declined, denial) always ride 200.
// Servers bind an ephemeral loopback port by default and announce it with
// one "LISTENING <port>" line so harnesses can connect without races.

#include <atomic>
#include <cstdio>
#include <functional>
#include <memory>
#include <string>
#include <thread>
#include <vector>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "opal/consent.hpp"
#include "opal/error.hpp"
#include "opal/gateway.hpp"
#include "opal/provider.hpp"

namespace opal {

namespace net_detail {

inline void reply_json(httplib::Response& res, int status, const nlohmann::json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

// Wraps a handler: JSON parse errors and protocol violations become 400,
// audit failures 500 (fail closed), anything else 500.
template <typename Fn>
auto guarded(Fn fn) {
  return [fn](const httplib::Request& req, httplib::Response& res) {
    try {
      nlohmann::json body;
      if (!req.body.empty()) body = nlohmann::json::parse(req.body);
      fn(body, res);
    } catch (const nlohmann::json::exception& e) {
      reply_json(res, 400, {{"error", std::string("malformed body: ") + e.what()}});
    } catch (const AuditError& e) {
      reply_json(res, 500, {{"error", e.what()}});
    } catch (const Error& e) {
      reply_json(res, 400, {{"error", e.what()}});
    } catch (const std::exception& e) {
      reply_json(res, 500, {{"error", e.what()}});
    }
  };
}

}  // namespace net_detail

// Shared serve loop: bind, announce, run until stop(). port() is valid
// after start() returns.
class HttpDaemon {
 public:
  virtual ~HttpDaemon() { stop(); }

  // Binds (ephemeral port when requested_port is 0) and starts serving on a
  // background thread; returns the bound port.
  int start(const std::string& host = "127.0.0.1", int requested_port = 0) {
    if (requested_port == 0) {
      port_ = server_.bind_to_any_port(host);
    } else {
      if (!server_.bind_to_port(host, requested_port))
        throw ConfigError("cannot bind port " + std::to_string(requested_port));
      port_ = requested_port;
    }
    if (port_ <= 0) throw ConfigError("cannot bind a listening port");
    thread_ = std::thread([this]() { server_.listen_after_bind(); });
    server_.wait_until_ready();
    return port_;
  }

  void announce(std::FILE* out = stdout) const {
    std::fprintf(out, "LISTENING %d\n", port_);
    std::fflush(out);
  }

  void wait() {
    if (thread_.joinable()) thread_.join();
  }

  void stop() {
    server_.stop();
    if (thread_.joinable()) thread_.join();
  }

  int port() const { return port_; }

 protected:
  httplib::Server server_;

 private:
  int port_{0};
  std::thread thread_;
};

// ── provider daemon ──

class ProviderServer : public HttpDaemon {
 public:
  explicit ProviderServer(std::shared_ptr<ProviderNode> node) : node_(std::move(node)) {
    server_.Post("/contracts", net_detail::guarded([this](const nlohmann::json& body,
                                                          httplib::Response& res) {
      const Contract contract = Contract::from_json(body);
      net_detail::reply_json(res, 200, node_->handle_contract(contract).to_json());
    }));
    server_.Get("/templates", [this](const httplib::Request&, httplib::Response& res) {
      net_detail::reply_json(res, 200, node_->templates_for_wire());
    });
    server_.Get("/audit/head", [this](const httplib::Request&, httplib::Response& res) {
      net_detail::reply_json(res, 200,
                             {{"head", node_->audit().head().hex()},
                              {"size", node_->audit().size()}});
    });
    server_.Post("/transparency", net_detail::guarded([this](const nlohmann::json& body,
                                                             httplib::Response& res) {
      const auto subject = body.at("subject").get<std::string>();
      nlohmann::json ids = nlohmann::json::array();
      for (const Uuid& id : node_->contracts_touching_subject(subject)) ids.push_back(id.str());
      net_detail::reply_json(res, 200, {{"contract_ids", ids}});
    }));
  }

 private:
  std::shared_ptr<ProviderNode> node_;
};

// ── consent authority daemon ──

class ConsentServer : public HttpDaemon {
 public:
  explicit ConsentServer(std::shared_ptr<ConsentService> service, Clock clock = system_clock())
      : service_(std::move(service)), clock_(std::move(clock)) {
    server_.Post("/rules", net_detail::guarded([this](const nlohmann::json& body,
                                                      httplib::Response& res) {
      const ConsentRule rule = ConsentRule::from_json(body.at("rule"));
      const SignatureEnvelope sig = SignatureEnvelope::from_json(body.at("signature"));
      const Uuid id = service_->set_rule(rule, sig);
      net_detail::reply_json(res, 200, {{"rule_id", id.str()}});
    }));
    server_.Post("/rules/revoke", net_detail::guarded([this](const nlohmann::json& body,
                                                             httplib::Response& res) {
      const Uuid id = Uuid::parse(body.at("rule_id").get<std::string>());
      const SignatureEnvelope sig = SignatureEnvelope::from_json(body.at("signature"));
      service_->revoke_rule(id, sig);
      net_detail::reply_json(res, 200, {{"revoked", true}});
    }));
    server_.Post("/token", net_detail::guarded([this](const nlohmann::json& body,
                                                      httplib::Response& res) {
      const PrincipalId querier = PrincipalId::from_json(body.at("querier"));
      const Uuid algorithm_id = Uuid::parse(body.at("algorithm_id").get<std::string>());
      const Uuid dataset_id = Uuid::parse(body.at("dataset_id").get<std::string>());
      const auto ttl = body.at("ttl_seconds").get<std::int64_t>();
      const auto token = service_->issue_token(querier, algorithm_id, dataset_id, ttl);
      if (!token) {
        net_detail::reply_json(res, 200, {{"denied", true}});  // a denial, not an error
        return;
      }
      net_detail::reply_json(res, 200, {{"token", token->to_json()}});
    }));
    server_.Post("/introspect", net_detail::guarded([this](const nlohmann::json& body,
                                                           httplib::Response& res) {
      const ConsentToken token = ConsentToken::from_json(body.at("token"));
      const IntrospectionResult result = service_->introspect(token, clock_());
      nlohmann::json subjects = nlohmann::json::array();
      for (const auto& s : result.consenting_subjects) subjects.push_back(s);
      net_detail::reply_json(res, 200,
                             {{"valid", result.valid},
                              {"reason", result.reason},
                              {"consenting_subjects", subjects}});
    }));
  }

 private:
  std::shared_ptr<ConsentService> service_;
  Clock clock_;
};

// ── gateway daemon ──

class GatewayServer : public HttpDaemon {
 public:
  explicit GatewayServer(std::shared_ptr<Gateway> gateway) : gateway_(std::move(gateway)) {
    server_.Post("/contracts", net_detail::guarded([this](const nlohmann::json& body,
                                                          httplib::Response& res) {
      const Contract contract = Contract::from_json(body);
      net_detail::reply_json(res, 200, gateway_->handle_contract(contract).to_json());
    }));
    server_.Get("/templates", [this](const httplib::Request&, httplib::Response& res) {
      net_detail::reply_json(res, 200, gateway_->federation_templates());
    });
    server_.Get("/members", [this](const httplib::Request&, httplib::Response& res) {
      nlohmann::json arr = nlohmann::json::array();
      for (const Member& m : gateway_->members().members()) arr.push_back(m.to_json());
      net_detail::reply_json(res, 200, arr);
    });
  }

 private:
  std::shared_ptr<Gateway> gateway_;
};

// ── HTTP clients ──

namespace net_detail {

inline nlohmann::json parse_reply(const httplib::Result& result, const std::string& what) {
  if (!result) throw ProtocolError(what + ": transport failure");
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(result->body);
  } catch (const nlohmann::json::exception&) {
    throw ProtocolError(what + ": unparseable reply");
  }
  if (result->status != 200) {
    std::string detail = body.is_object() && body.contains("error")
                             ? body["error"].get<std::string>()
                             : std::to_string(result->status);
    throw ProtocolError(what + ": " + detail);
  }
  return body;
}

inline httplib::Client make_client(const std::string& endpoint, std::int64_t timeout_seconds) {
  httplib::Client client(endpoint);
  client.set_connection_timeout(timeout_seconds, 0);
  client.set_read_timeout(timeout_seconds, 0);
  client.set_write_timeout(timeout_seconds, 0);
  return client;
}

}  // namespace net_detail

// Gateway-side transport to member providers.
class HttpProviderClient : public ProviderClient {
 public:
  explicit HttpProviderClient(std::int64_t timeout_seconds = 10)
      : timeout_seconds_(timeout_seconds) {}

  nlohmann::json submit_contract(const Member& member,
                                 const nlohmann::json& contract_wire) override {
    auto client = net_detail::make_client(member.endpoint, timeout_seconds_);
    return net_detail::parse_reply(
        client.Post("/contracts", contract_wire.dump(), "application/json"),
        "submit to " + member.endpoint);
  }

  nlohmann::json list_templates(const Member& member) override {
    auto client = net_detail::make_client(member.endpoint, timeout_seconds_);
    return net_detail::parse_reply(client.Get("/templates"), "templates from " + member.endpoint);
  }

 private:
  std::int64_t timeout_seconds_;
};

// Provider- and querier-side client for the consent authority.
class ConsentClient {
 public:
  explicit ConsentClient(std::string endpoint, std::int64_t timeout_seconds = 10)
      : endpoint_(std::move(endpoint)), timeout_seconds_(timeout_seconds) {}

  std::optional<ConsentToken> request_token(const PrincipalId& querier, const Uuid& algorithm_id,
                                            const Uuid& dataset_id, std::int64_t ttl_seconds) {
    auto client = net_detail::make_client(endpoint_, timeout_seconds_);
    const nlohmann::json body = {{"querier", querier.to_json()},
                                 {"algorithm_id", algorithm_id.str()},
                                 {"dataset_id", dataset_id.str()},
                                 {"ttl_seconds", ttl_seconds}};
    const nlohmann::json reply = net_detail::parse_reply(
        client.Post("/token", body.dump(), "application/json"), "token request");
    if (reply.contains("denied")) return std::nullopt;
    return ConsentToken::from_json(reply.at("token"));
  }

  // Remote introspection; the authority evaluates with its own clock.
  IntrospectionResult introspect(const ConsentToken& token) {
    auto client = net_detail::make_client(endpoint_, timeout_seconds_);
    const nlohmann::json reply = net_detail::parse_reply(
        client.Post("/introspect", nlohmann::json{{"token", token.to_json()}}.dump(),
                    "application/json"),
        "introspection");
    IntrospectionResult result;
    result.valid = reply.at("valid").get<bool>();
    result.reason = reply.at("reason").get<std::string>();
    for (const auto& s : reply.at("consenting_subjects"))
      result.consenting_subjects.insert(s.get<std::string>());
    return result;
  }

  nlohmann::json set_rule(const ConsentRule& rule, const SignatureEnvelope& signature) {
    auto client = net_detail::make_client(endpoint_, timeout_seconds_);
    const nlohmann::json body = {{"rule", rule.to_json()}, {"signature", signature.to_json()}};
    return net_detail::parse_reply(client.Post("/rules", body.dump(), "application/json"),
                                   "set rule");
  }

  nlohmann::json revoke_rule(const Uuid& rule_id, const SignatureEnvelope& signature) {
    auto client = net_detail::make_client(endpoint_, timeout_seconds_);
    const nlohmann::json body = {{"rule_id", rule_id.str()}, {"signature", signature.to_json()}};
    return net_detail::parse_reply(client.Post("/rules/revoke", body.dump(), "application/json"),
                                   "revoke rule");
  }

 private:
  std::string endpoint_;
  std::int64_t timeout_seconds_;
};

}  // namespace opal
