#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <fstream>
#include <regex>

#include "skelnav/backends.hpp"

namespace skelnav::backends {

using nlohmann::json;

namespace {

struct UrlParts {
    std::string origin;  // scheme://host[:port]
    std::string path;
};

UrlParts split_url(const std::string& url) {
    static const std::regex re(R"(^(https?://[^/]+)(/.*)?$)");
    std::smatch m;
    if (!std::regex_match(url, m, re)) throw InputError("unsupported endpoint URL: " + url);
    return {m[1].str(), m[2].matched ? m[2].str() : "/"};
}

}  // namespace

HttpResponse HttpTransport::post(const HttpRequest& request) {
    const auto parts = split_url(request.url);
    httplib::Client client(parts.origin);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(request.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    std::string content_type = "application/json";
    for (const auto& [k, v] : request.headers) {
        if (k == "Content-Type") content_type = v;
        else headers.emplace(k, v);
    }
    auto res = client.Post(parts.path, headers, request.body, content_type);
    if (!res) {
        const auto err = res.error();
        if (err == httplib::Error::Read || err == httplib::Error::Write || err == httplib::Error::ConnectionTimeout)
            throw TimeoutError("request to " + request.url + " timed out or was cut off (" + httplib::to_string(err) +
                               ")");
        throw BackendError("request to " + request.url + " failed: " + httplib::to_string(err));
    }
    return {res->status, res->body};
}

std::shared_ptr<CassetteTransport> CassetteTransport::record(std::shared_ptr<Transport> inner,
                                                             std::filesystem::path file) {
    if (!inner) throw InputError("cassette recording needs an inner transport");
    std::shared_ptr<CassetteTransport> t(new CassetteTransport());
    t->inner_ = std::move(inner);
    t->file_ = std::move(file);
    std::ofstream(t->file_, std::ios::trunc);
    return t;
}

std::shared_ptr<CassetteTransport> CassetteTransport::replay(std::filesystem::path file) {
    std::ifstream is(file);
    if (!is) throw InputError("cannot open cassette " + file.string());
    std::shared_ptr<CassetteTransport> t(new CassetteTransport());
    t->file_ = std::move(file);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        const auto j = json::parse(line);
        t->tape_.emplace_back(j.at("request").get<std::string>(),
                              HttpResponse{j.at("status").get<int>(), j.at("response").get<std::string>()});
    }
    return t;
}

HttpResponse CassetteTransport::post(const HttpRequest& request) {
    std::lock_guard lock(mutex_);
    if (inner_) {
        HttpResponse resp = inner_->post(request);
        std::ofstream os(file_, std::ios::app);
        os << json{{"request", request.body}, {"status", resp.status}, {"response", resp.body}}.dump() << '\n';
        return resp;
    }
    if (tape_.empty()) throw ProtocolError("cassette " + file_.string() + " is exhausted");
    auto [body, resp] = std::move(tape_.front());
    tape_.pop_front();
    if (body != request.body) throw ProtocolError("request does not match cassette " + file_.string());
    return resp;
}

}  // namespace skelnav::backends
