#pragma once

// Builds the shop fixture database and a manifest in a scratch directory.

#include <sqlite3.h>
#include <unistd.h>

#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>

#include "sqlrl/exec_harness.hpp"

namespace fixture {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline fs::path source_dir() { return fs::path(SQLRL_SOURCE_DIR); }
inline fs::path fixtures_dir() { return source_dir() / "tests" / "fixtures"; }

inline void build_db(const fs::path& db, const fs::path& script) {
  fs::remove(db);
  sqlite3* h = nullptr;
  if (sqlite3_open(db.c_str(), &h) != SQLITE_OK) throw std::runtime_error("cannot create " + db.string());
  char* err = nullptr;
  std::string sql = read_file(script);
  int rc = sqlite3_exec(h, sql.c_str(), nullptr, nullptr, &err);
  std::string msg = err ? err : "";
  sqlite3_free(err);
  sqlite3_close(h);
  if (rc != SQLITE_OK) throw std::runtime_error("fixture script failed: " + msg);
}

/// A scratch directory holding shop.db and manifest.json. Built once per
/// process and reused.
struct Shop {
  fs::path dir;
  fs::path db;
  fs::path manifest;

  static const Shop& get() {
    static Shop s = [] {
      Shop x;
      x.dir = fs::temp_directory_path() / ("sqlrl-fixture-" + std::to_string(::getpid()));
      fs::create_directories(x.dir);
      x.db = x.dir / "shop.db";
      x.manifest = x.dir / "manifest.json";
      build_db(x.db, fixtures_dir() / "shop.sql");
      std::ofstream(x.manifest) << R"({"databases":[{"db_id":"shop","source":"fixture","engine":"sqlite","location":"shop.db"}]})";
      return x;
    }();
    static struct Cleanup {
      fs::path dir;
      ~Cleanup() {
        std::error_code ec;
        fs::remove_all(dir, ec);
      }
    } cleanup{s.dir};
    return s;
  }

  sqlrl::DbRegistry registry() const { return sqlrl::DbRegistry::load(manifest.string()); }
};

}  // namespace fixture
