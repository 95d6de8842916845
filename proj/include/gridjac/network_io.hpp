#pragma once

#include <fstream>
#include <set>
#include <sstream>
#include <string>
#include <utility>

#include <json.hpp>

#include "gridjac/errors.hpp"
#include "gridjac/grid.hpp"

namespace gridjac {

namespace detail {

inline std::pair<int, int> line_col(const std::string& text, std::size_t byte) {
    int line = 1, col = 1;
    for (std::size_t i = 0; i < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

inline double require_number(const nlohmann::json& obj, const char* key,
                             const std::string& where) {
    if (!obj.contains(key) || !obj[key].is_number())
        throw ParseError(where + ": missing or non-numeric field \"" + key + "\"");
    return obj[key].get<double>();
}

inline int require_int(const nlohmann::json& obj, const char* key,
                       const std::string& where) {
    if (!obj.contains(key) || !obj[key].is_number_integer())
        throw ParseError(where + ": missing or non-integer field \"" + key + "\"");
    return obj[key].get<int>();
}

} // namespace detail

//! Parse a UTF-8 JSON network document. Throws ParseError with a location
//! (line/col for syntax errors, a JSON path for semantic ones).
inline Grid parse_network(const std::string& text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        auto [line, col] = detail::line_col(text, e.byte > 0 ? e.byte - 1 : 0);
        std::ostringstream os;
        os << "line " << line << ", col " << col << ": " << e.what();
        throw ParseError(os.str());
    }

    if (!doc.is_object() || !doc.contains("buses") || !doc.contains("branches"))
        throw ParseError("document: expected object with \"buses\" and \"branches\"");

    Grid grid;
    grid.base_kv = doc.value("base_kv", 0.0);

    int slack_count = 0;
    std::set<int> ids;
    for (std::size_t i = 0; i < doc["buses"].size(); ++i) {
        const auto& jb = doc["buses"][i];
        const std::string where = "buses[" + std::to_string(i) + "]";
        Bus bus;
        bus.id = detail::require_int(jb, "id", where);
        if (!ids.insert(bus.id).second)
            throw ParseError(where + ": duplicate bus id " + std::to_string(bus.id));
        std::string kind = jb.value("kind", "");
        if (kind == "slack")
            bus.kind = BusKind::Slack;
        else if (kind == "pv")
            bus.kind = BusKind::PV;
        else if (kind == "pq")
            bus.kind = BusKind::PQ;
        else
            throw ParseError(where + ": unknown kind \"" + kind + "\"");
        if (bus.kind == BusKind::Slack) ++slack_count;
        if (bus.kind != BusKind::PQ) {
            bus.v_setpoint = detail::require_number(jb, "v_setpoint", where);
            if (!(bus.v_setpoint > 0.0))
                throw ParseError(where + ": v_setpoint must be positive");
        } else if (jb.contains("v_setpoint")) {
            bus.v_setpoint = jb["v_setpoint"].get<double>();
            if (!(bus.v_setpoint > 0.0))
                throw ParseError(where + ": v_setpoint must be positive");
        }
        bus.p = detail::require_number(jb, "p", where);
        bus.q = detail::require_number(jb, "q", where);
        bus.g_shunt = detail::require_number(jb, "g_shunt", where);
        bus.b_shunt = detail::require_number(jb, "b_shunt", where);
        grid.buses.push_back(bus);
    }
    if (slack_count != 1)
        throw ParseError("buses: expected exactly one slack bus, found " +
                         std::to_string(slack_count));

    std::set<std::pair<int, int>> pairs;
    for (std::size_t i = 0; i < doc["branches"].size(); ++i) {
        const auto& jb = doc["branches"][i];
        const std::string where = "branches[" + std::to_string(i) + "]";
        Branch br;
        br.from = detail::require_int(jb, "from", where);
        br.to = detail::require_int(jb, "to", where);
        if (br.from == br.to)
            throw ParseError(where + ": branch endpoints must differ");
        if (!ids.count(br.from) || !ids.count(br.to))
            throw ParseError(where + ": unknown bus reference");
        auto key = std::minmax(br.from, br.to);
        if (!pairs.insert(key).second)
            throw ParseError(where + ": duplicate branch between " +
                             std::to_string(key.first) + " and " +
                             std::to_string(key.second));
        br.g = detail::require_number(jb, "g", where);
        br.b = detail::require_number(jb, "b", where);
        std::string status = jb.value("status", "closed");
        if (status == "closed")
            br.status = BranchStatus::Closed;
        else if (status == "open")
            br.status = BranchStatus::Open;
        else
            throw ParseError(where + ": unknown status \"" + status + "\"");
        grid.branches.push_back(br);
    }
    return grid;
}

inline std::string serialize_network(const Grid& grid) {
    nlohmann::json doc;
    doc["base_kv"] = grid.base_kv;
    doc["buses"] = nlohmann::json::array();
    for (const Bus& bus : grid.buses) {
        nlohmann::json jb;
        jb["id"] = bus.id;
        switch (bus.kind) {
            case BusKind::Slack: jb["kind"] = "slack"; break;
            case BusKind::PV:    jb["kind"] = "pv"; break;
            case BusKind::PQ:    jb["kind"] = "pq"; break;
        }
        jb["v_setpoint"] = bus.v_setpoint;
        jb["p"] = bus.p;
        jb["q"] = bus.q;
        jb["g_shunt"] = bus.g_shunt;
        jb["b_shunt"] = bus.b_shunt;
        doc["buses"].push_back(jb);
    }
    doc["branches"] = nlohmann::json::array();
    for (const Branch& br : grid.branches) {
        nlohmann::json jb;
        jb["from"] = br.from;
        jb["to"] = br.to;
        jb["g"] = br.g;
        jb["b"] = br.b;
        jb["status"] = br.status == BranchStatus::Closed ? "closed" : "open";
        doc["branches"].push_back(jb);
    }
    return doc.dump(1) + "\n";
}

inline Grid load_network(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("cannot open network file: " + path);
    std::ostringstream os;
    os << in.rdbuf();
    return parse_network(os.str());
}

} // namespace gridjac
