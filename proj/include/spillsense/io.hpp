#pragma once

#include <bit>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "spillsense/field.hpp"
#include "spillsense/grid.hpp"

namespace spillsense {

static_assert(std::endian::native == std::endian::little,
              "FLD1 stores little-endian doubles; big-endian hosts unsupported");

/// Shortest-round-trip style formatting used for every persisted number, so
/// identical runs produce identical bytes.
inline std::string format_number(double x, int digits = 12) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.*g", digits, x);
    return buf;
}

// ---------------------------------------------------------------------------
// FLD1 field snapshot format.
//
//   FLD1 n_x n_y dx dy origin_x origin_y field_count\n
//   name_1 name_2 ... name_f\n
//   <field_count blocks of n_x*n_y little-endian 64-bit floats, row-major>
// ---------------------------------------------------------------------------

inline void write_fld1(const std::string& path,
                       const std::vector<std::string>& names,
                       const std::vector<const ScalarField*>& fields) {
    if (names.empty() || names.size() != fields.size())
        throw IoError("write_fld1: names/fields mismatch");
    const GridSpec& g = *fields.front()->grid();
    for (const ScalarField* f : fields)
        if (f->grid() != fields.front()->grid())
            throw GridMismatchError("write_fld1: fields on different grids");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("write_fld1: cannot open " + path);
    out << "FLD1 " << g.nx() << ' ' << g.ny() << ' ' << format_number(g.dx(), 17)
        << ' ' << format_number(g.dy(), 17) << ' '
        << format_number(g.origin().x, 17) << ' '
        << format_number(g.origin().y, 17) << ' ' << fields.size() << '\n';
    for (std::size_t k = 0; k < names.size(); ++k)
        out << names[k] << (k + 1 == names.size() ? '\n' : ' ');
    for (const ScalarField* f : fields)
        out.write(reinterpret_cast<const char*>(f->data().data()),
                  static_cast<std::streamsize>(f->size() * sizeof(double)));
    if (!out) throw IoError("write_fld1: write failed for " + path);
}

struct Fld1File {
    GridPtr grid;
    std::vector<std::string> names;
    std::vector<ScalarField> fields;

    const ScalarField& field(const std::string& name) const {
        for (std::size_t k = 0; k < names.size(); ++k)
            if (names[k] == name) return fields[k];
        throw IoError("FLD1: no field named " + name);
    }
};

inline Fld1File read_fld1(const std::string& path, GridPtr reuse_grid = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_fld1: cannot open " + path);
    std::string header;
    std::getline(in, header);
    std::istringstream hs(header);
    std::string magic;
    int nx = 0, ny = 0, count = 0;
    double dx = 0, dy = 0, ox = 0, oy = 0;
    hs >> magic >> nx >> ny >> dx >> dy >> ox >> oy >> count;
    if (magic != "FLD1" || !hs || count < 1)
        throw IoError("read_fld1: bad header in " + path);

    std::string name_line;
    std::getline(in, name_line);
    std::istringstream ns(name_line);
    Fld1File out;
    std::string n;
    while (ns >> n) out.names.push_back(n);
    if (static_cast<int>(out.names.size()) != count)
        throw IoError("read_fld1: field name count mismatch in " + path);

    out.grid = reuse_grid ? std::move(reuse_grid)
                          : make_grid(nx, ny, dx, dy, {ox, oy});
    if (out.grid->nx() != nx || out.grid->ny() != ny)
        throw GridMismatchError("read_fld1: grid shape mismatch");
    for (int f = 0; f < count; ++f) {
        ScalarField s(out.grid);
        in.read(reinterpret_cast<char*>(s.data().data()),
                static_cast<std::streamsize>(s.size() * sizeof(double)));
        if (!in) throw IoError("read_fld1: truncated data in " + path);
        out.fields.push_back(std::move(s));
    }
    return out;
}

// ---------------------------------------------------------------------------
// CSV output with stable formatting.
// ---------------------------------------------------------------------------

class CsvWriter {
public:
    CsvWriter(const std::string& path, const std::string& header,
              const std::vector<std::string>& comments = {})
        : out_(path) {
        if (!out_) throw IoError("CsvWriter: cannot open " + path);
        for (const auto& c : comments) out_ << "# " << c << '\n';
        out_ << header << '\n';
    }

    void row(const std::vector<std::string>& cells) {
        for (std::size_t k = 0; k < cells.size(); ++k)
            out_ << cells[k] << (k + 1 == cells.size() ? '\n' : ',');
    }

    ~CsvWriter() = default;

private:
    std::ofstream out_;
};

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;

    int column(const std::string& name) const {
        for (std::size_t k = 0; k < header.size(); ++k)
            if (header[k] == name) return static_cast<int>(k);
        throw IoError("CSV: no column named " + name);
    }
};

inline CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("read_csv: cannot open " + path);
    CsvTable t;
    std::string line;
    bool header_done = false;
    while (std::getline(in, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream ls(line);
        while (std::getline(ls, cell, ',')) cells.push_back(cell);
        if (!header_done) {
            t.header = std::move(cells);
            header_done = true;
        } else {
            t.rows.push_back(std::move(cells));
        }
    }
    return t;
}

inline void ensure_directory(const std::string& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory " + dir);
}

}  // namespace spillsense
