#include "ckdyn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>
#include <string>

#include "ckdyn/errors.hpp"
#include "json.hpp"

namespace ckdyn {

namespace {

using nlohmann::json;

constexpr const char* kFormat = "ckdyn-checkpoint";
constexpr int kVersion = 1;

std::string readout_name(Readout r) { return r == Readout::position ? "position" : "full_state"; }

Readout readout_from(const std::string& s) {
    if (s == "position") return Readout::position;
    if (s == "full_state") return Readout::full_state;
    throw ParseError(ParseError::Kind::malformed, "checkpoint: unknown readout '" + s + "'");
}

json config_json(const CkNetworkConfig& c) {
    return {{"family", to_string(c.family)},   {"order", c.order},
            {"depth", c.depth},                {"width", c.width},
            {"input_dim", c.input_dim},        {"num_classes", c.num_classes},
            {"dl", c.dl},                      {"activation", to_string(c.activation)},
            {"readout", readout_name(c.readout)}};
}

CkNetworkConfig config_from(const json& j, std::uint64_t seed) {
    CkNetworkConfig c;
    c.family = family_from_string(j.at("family").get<std::string>());
    c.order = j.at("order").get<int>();
    c.depth = j.at("depth").get<int>();
    c.width = j.at("width").get<std::size_t>();
    c.input_dim = j.at("input_dim").get<std::size_t>();
    c.num_classes = j.at("num_classes").get<std::size_t>();
    c.dl = j.at("dl").get<double>();
    c.activation = activation_from_string(j.at("activation").get<std::string>());
    c.readout = readout_from(j.at("readout").get<std::string>());
    c.seed = seed;
    return c;
}

void put_f64(std::ostream& os, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    char buf[8];
    for (int i = 0; i < 8; ++i) buf[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
    os.write(buf, 8);
}

double get_f64(std::istream& is) {
    unsigned char buf[8];
    if (!is.read(reinterpret_cast<char*>(buf), 8))
        throw ParseError(ParseError::Kind::truncated, "checkpoint: payload ends early");
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) bits = (bits << 8) | buf[i];
    return std::bit_cast<double>(bits);
}

}  // namespace

void save_checkpoint(const Network& net, std::ostream& os) {
    json params = json::array();
    const auto ps = net.parameters();
    for (const auto& p : ps) params.push_back({{"name", p.name}, {"shape", p.var.shape()}});
    const json header = {{"format", kFormat},
                         {"version", kVersion},
                         {"seed", net.config().seed},
                         {"config", config_json(net.config())},
                         {"parameters", params}};
    os << header.dump() << '\n';
    for (const auto& p : ps)
        for (double v : p.var.value().data()) put_f64(os, v);
    if (!os) throw IoError("checkpoint: write failed");
}

void save_checkpoint(const Network& net, const std::filesystem::path& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("checkpoint: cannot write " + path.string());
    save_checkpoint(net, os);
}

Network load_checkpoint(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) throw ParseError(ParseError::Kind::truncated, "checkpoint: missing header");
    json header;
    try {
        header = json::parse(line);
    } catch (const json::parse_error& e) {
        throw ParseError(ParseError::Kind::malformed, std::string("checkpoint: header is not JSON: ") + e.what());
    }
    try {
        if (header.at("format") != kFormat) throw ParseError(ParseError::Kind::bad_magic, "checkpoint: wrong format tag");
        if (header.at("version") != kVersion)
            throw ParseError(ParseError::Kind::malformed, "checkpoint: unsupported version " + header.at("version").dump());
        Network net(config_from(header.at("config"), header.at("seed").get<std::uint64_t>()));
        const auto ps = net.parameters();
        const auto& stored = header.at("parameters");
        if (stored.size() != ps.size())
            throw ParseError(ParseError::Kind::count_mismatch, "checkpoint: " + std::to_string(stored.size()) +
                                                                   " parameters stored, config implies " +
                                                                   std::to_string(ps.size()));
        for (std::size_t i = 0; i < ps.size(); ++i) {
            const auto name = stored[i].at("name").get<std::string>();
            const auto shape = stored[i].at("shape").get<Shape>();
            if (name != ps[i].name || shape != ps[i].var.shape())
                throw ParseError(ParseError::Kind::malformed, "checkpoint: parameter " + std::to_string(i) + " is '" +
                                                                  name + "' " + shape_string(shape) + ", expected '" +
                                                                  ps[i].name + "' " + shape_string(ps[i].var.shape()));
        }
        for (const auto& p : ps) {
            Tensor t(p.var.shape());
            for (auto& v : t.data()) v = get_f64(is);
            p.var.assign(std::move(t));
        }
        return net;
    } catch (const json::exception& e) {
        throw ParseError(ParseError::Kind::malformed, std::string("checkpoint: bad header field: ") + e.what());
    } catch (const ContractError& e) {
        throw ParseError(ParseError::Kind::malformed, std::string("checkpoint: invalid config: ") + e.what());
    }
}

Network load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open " + path.string());
    return load_checkpoint(is);
}

}  // namespace ckdyn
