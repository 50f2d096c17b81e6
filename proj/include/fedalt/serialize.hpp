// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdio>
#include <cstdlib>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "fedalt/matrix.hpp"
#include "fedalt/strategy.hpp"

namespace fedalt {

/// One client's adapter matrices, keyed by layer id and wire role. Used for
/// checkpoints, uploads and broadcasts alike; the role set varies by use.
struct AdapterSet {
    int client_id = -1;
    int round = 0;
    std::map<int, std::map<WireRole, Matrix>> layers;

    bool has(int layer, WireRole role) const {
        auto it = layers.find(layer);
        return it != layers.end() && it->second.count(role) > 0;
    }
};

namespace detail {

// %a round-trips 64-bit floats exactly through strtod.
inline std::string hex_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%a", v);
    return buf;
}

inline void write_matrix(std::ostringstream& out, const Matrix& m) {
    for (int i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        for (int j = 0; j < m.cols(); ++j) {
            if (j) out << ' ';
            out << hex_double(row[j]);
        }
        out << '\n';
    }
}

class LineReader {
public:
    explicit LineReader(const std::string& text) : text_(text) {}

    bool next(std::string& line) {
        if (pos_ >= text_.size()) return false;
        std::size_t end = text_.find('\n', pos_);
        if (end == std::string::npos) end = text_.size();
        line = text_.substr(pos_, end - pos_);
        pos_ = end + 1;
        ++line_no_;
        return true;
    }

    [[noreturn]] void fail(const std::string& msg) const {
        throw Error("adapter container, line " + std::to_string(line_no_) + ": " + msg);
    }

private:
    const std::string& text_;
    std::size_t pos_ = 0;
    int line_no_ = 0;
};

inline Matrix read_matrix(LineReader& in, int rows, int cols) {
    Matrix m(rows, cols);
    std::string line;
    for (int i = 0; i < rows; ++i) {
        if (!in.next(line)) in.fail("unexpected end of matrix data");
        const char* p = line.c_str();
        auto row = m.row(i);
        for (int j = 0; j < cols; ++j) {
            char* end = nullptr;
            const double v = std::strtod(p, &end);
            if (end == p) in.fail("expected " + std::to_string(cols) + " values, found " + std::to_string(j));
            if (!std::isfinite(v)) in.fail("non-finite matrix entry");
            row[j] = v;
            p = end;
        }
        char* end = nullptr;
        if (std::strtod(p, &end), end != p) in.fail("extra values on matrix row");
    }
    return m;
}

}  // namespace detail

inline std::string write_adapter_set(const AdapterSet& set) {
    std::ostringstream out;
    out << "fedalt-adapters v1\n";
    out << "client " << set.client_id << '\n';
    out << "round " << set.round << '\n';
    out << "layers";
    for (const auto& [id, roles] : set.layers) out << ' ' << id;
    out << '\n';
    for (const auto& [id, roles] : set.layers) {
        out << "layer " << id << '\n';
        for (const auto& [role, m] : roles) {
            out << "mat " << wire_role_name(role) << ' ' << m.rows() << ' ' << m.cols() << '\n';
            detail::write_matrix(out, m);
        }
    }
    out << "end\n";
    return out.str();
}

inline AdapterSet read_adapter_set(const std::string& text) {
    detail::LineReader in(text);
    std::string line;
    if (!in.next(line) || line != "fedalt-adapters v1") in.fail("bad magic, expected 'fedalt-adapters v1'");

    AdapterSet set;
    auto expect_int_field = [&](const std::string& key) {
        if (!in.next(line)) in.fail("missing '" + key + "' header");
        std::istringstream ss(line);
        std::string k;
        long v = 0;
        if (!(ss >> k >> v) || k != key) in.fail("expected '" + key + " <int>'");
        return static_cast<int>(v);
    };
    set.client_id = expect_int_field("client");
    set.round = expect_int_field("round");

    if (!in.next(line)) in.fail("missing 'layers' header");
    std::vector<int> declared;
    {
        std::istringstream ss(line);
        std::string k;
        if (!(ss >> k) || k != "layers") in.fail("expected 'layers <ids...>'");
        int id;
        while (ss >> id) declared.push_back(id);
    }

    int current_layer = -1;
    bool have_layer = false;
    bool done = false;
    while (in.next(line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "end") {
            done = true;
            break;
        }
        if (word == "layer") {
            if (!(ss >> current_layer)) in.fail("expected 'layer <id>'");
            if (set.layers.count(current_layer)) in.fail("duplicate layer " + std::to_string(current_layer));
            set.layers[current_layer];
            have_layer = true;
            continue;
        }
        if (word == "mat") {
            if (!have_layer) in.fail("matrix before any layer header");
            std::string role_name;
            int rows = 0, cols = 0;
            if (!(ss >> role_name >> rows >> cols) || rows < 0 || cols < 0)
                in.fail("expected 'mat <role> <rows> <cols>'");
            const WireRole role = parse_wire_role(role_name);
            auto& layer = set.layers[current_layer];
            if (layer.count(role)) in.fail("duplicate role " + role_name + " in layer " + std::to_string(current_layer));
            layer[role] = detail::read_matrix(in, rows, cols);
            continue;
        }
        in.fail("unexpected token '" + word + "'");
    }
    if (!done) in.fail("missing 'end' marker");

    if (declared.size() != set.layers.size()) in.fail("layer list does not match layer blocks");
    for (int id : declared)
        if (!set.layers.count(id)) in.fail("declared layer " + std::to_string(id) + " has no block");
    return set;
}

/// Named-matrix container for dataset dumps, same encoding discipline as the
/// adapter container.
struct DatasetDump {
    int client_id = -1;
    int task_id = -1;
    std::map<std::string, Matrix> blocks;
};

inline std::string write_dataset_dump(const DatasetDump& d) {
    std::ostringstream out;
    out << "fedalt-dataset v1\n";
    out << "client " << d.client_id << '\n';
    out << "task " << d.task_id << '\n';
    for (const auto& [name, m] : d.blocks) {
        out << "mat " << name << ' ' << m.rows() << ' ' << m.cols() << '\n';
        detail::write_matrix(out, m);
    }
    out << "end\n";
    return out.str();
}

inline DatasetDump read_dataset_dump(const std::string& text) {
    detail::LineReader in(text);
    std::string line;
    if (!in.next(line) || line != "fedalt-dataset v1") in.fail("bad magic, expected 'fedalt-dataset v1'");
    DatasetDump d;
    auto parse_int_field = [&](const std::string& key) {
        if (!in.next(line)) in.fail("missing '" + key + "' header");
        std::istringstream ss(line);
        std::string k;
        long v = 0;
        if (!(ss >> k >> v) || k != key) in.fail("expected '" + key + " <int>'");
        return static_cast<int>(v);
    };
    d.client_id = parse_int_field("client");
    d.task_id = parse_int_field("task");
    while (in.next(line)) {
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "end") return d;
        if (word != "mat") in.fail("unexpected token '" + word + "'");
        std::string name;
        int rows = 0, cols = 0;
        if (!(ss >> name >> rows >> cols)) in.fail("expected 'mat <name> <rows> <cols>'");
        if (d.blocks.count(name)) in.fail("duplicate block " + name);
        d.blocks[name] = detail::read_matrix(in, rows, cols);
    }
    in.fail("missing 'end' marker");
}

}  // namespace fedalt
