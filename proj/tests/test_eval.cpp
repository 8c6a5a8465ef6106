#include <cmath>
#include <doctest.h>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "reidkit/eval.hpp"
#include "reidkit/rng.hpp"

using namespace reidkit;
namespace fs = std::filesystem;

namespace {

Mat from_rows(const std::vector<std::vector<double>>& rows) {
    Mat m(rows.size(), rows.empty() ? 0 : rows[0].size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m.at(i, j) = rows[i][j];
    return m;
}

LabeledEmbeddingSet make_set(const std::vector<std::vector<double>>& rows,
                             const std::vector<int>& ids, const std::vector<int>& cams = {}) {
    LabeledEmbeddingSet set;
    set.embeddings = from_rows(rows);
    set.identities = ids;
    set.cameras = cams;
    return set;
}

}  // namespace

TEST_CASE("distance_matrix basics") {
    const Mat a = from_rows({{1.0, 0.0}});
    const Mat b = from_rows({{1.0, 0.0}, {0.0, 1.0}});
    const Mat eu = distance_matrix(a, b, Metric::Euclidean);
    CHECK(eu.at(0, 0) == 0.0);
    CHECK(eu.at(0, 1) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    const Mat cos = distance_matrix(a, b, Metric::Cosine);
    CHECK(cos.at(0, 0) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(cos.at(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("cosine distance is invariant to positive per-vector scaling") {
    Rng rng(42);
    Mat a(4, 5), b(6, 5), a2(4, 5), b2(6, 5);
    for (std::size_t i = 0; i < a.data.size(); ++i) a.data[i] = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < b.data.size(); ++i) b.data[i] = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < 4; ++i) {
        const double s = rng.uniform(0.1, 7.0);
        for (std::size_t j = 0; j < 5; ++j) a2.at(i, j) = s * a.at(i, j);
    }
    for (std::size_t i = 0; i < 6; ++i) {
        const double s = rng.uniform(0.1, 7.0);
        for (std::size_t j = 0; j < 5; ++j) b2.at(i, j) = s * b.at(i, j);
    }
    const Mat d1 = distance_matrix(a, b, Metric::Cosine);
    const Mat d2 = distance_matrix(a2, b2, Metric::Cosine);
    for (std::size_t i = 0; i < d1.data.size(); ++i)
        CHECK(d1.data[i] == doctest::Approx(d2.data[i]).epsilon(1e-9));
}

TEST_CASE("cosine distance rejects zero-norm vectors, naming the row") {
    const Mat a = from_rows({{1.0, 0.0}, {0.0, 0.0}});
    const Mat b = from_rows({{1.0, 1.0}});
    CHECK_THROWS_WITH_AS(distance_matrix(a, b, Metric::Cosine), doctest::Contains("row 1"),
                         DataError);
    CHECK_NOTHROW(distance_matrix(a, b, Metric::Euclidean));
}

TEST_CASE("AP for relevance sequence (1,0,1) is 5/6") {
    // single query at the origin; gallery ordered by distance with ids 1,2,1
    const auto query = make_set({{0.0, 0.0}}, {1});
    const auto gallery = make_set({{1.0, 0.0}, {2.0, 0.0}, {3.0, 0.0}}, {1, 2, 1});
    const EvalReport report = evaluate(query, gallery, Metric::Euclidean);
    CHECK(report.map == doctest::Approx((1.0 + 2.0 / 3.0) / 2.0).epsilon(1e-12));
    CHECK(report.queries_used == 1);
}

TEST_CASE("CMC with matches at rank 1 and rank 2") {
    const auto query = make_set({{0.0}, {10.0}}, {1, 2});
    // query 1 matches nearest; query 2's nearest is a distractor
    const auto gallery = make_set({{0.1}, {9.8}, {10.3}}, {1, 3, 2});
    const EvalReport report = evaluate(query, gallery, Metric::Euclidean);
    CHECK(report.cmc[0] == doctest::Approx(0.5));
    CHECK(report.cmc[1] == doctest::Approx(1.0));
    CHECK(report.cmc[2] == doctest::Approx(1.0));
}

TEST_CASE("same-id same-camera gallery entries are excluded") {
    const auto query = make_set({{0.0}}, {1}, {1});
    // (1,1) would be rank-1 but is excluded; (1,2) is the only valid match
    const auto gallery = make_set({{0.05}, {1.0}, {0.5}}, {1, 1, 2}, {1, 2, 1});
    const EvalReport report = evaluate(query, gallery, Metric::Euclidean);
    CHECK(report.queries_used == 1);
    // ranking among kept items: distractor(0.5) then match(1.0)
    CHECK(report.cmc[0] == doctest::Approx(0.0));
    CHECK(report.cmc[1] == doctest::Approx(1.0));
    CHECK(report.map == doctest::Approx(0.5));
}

TEST_CASE("junk gallery items are invisible to ranking") {
    const auto query = make_set({{0.0}}, {7});
    const auto gallery = make_set({{0.01}, {0.02}, {1.0}}, {-1, -1, 7});
    const EvalReport report = evaluate(query, gallery, Metric::Euclidean);
    CHECK(report.cmc[0] == doctest::Approx(1.0));
    CHECK(report.map == doctest::Approx(1.0));
}

TEST_CASE("queries with no valid match are dropped and counted") {
    const auto query = make_set({{0.0}, {5.0}}, {1, 9});
    const auto gallery = make_set({{0.1}, {4.9}}, {1, 2});
    const EvalReport report = evaluate(query, gallery, Metric::Euclidean);
    CHECK(report.queries_used == 1);
    CHECK(report.queries_dropped == 1);
    CHECK(report.map == doctest::Approx(1.0));
}

TEST_CASE("evaluate matches the brute-force oracle on 200 random instances") {
    Rng rng(987654);
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t nq = static_cast<std::size_t>(rng.uniform_int(1, 20));
        const std::size_t ng = static_cast<std::size_t>(rng.uniform_int(2, 50));
        const std::size_t d = static_cast<std::size_t>(rng.uniform_int(1, 6));
        const bool with_cams = rng.uniform() < 0.5;
        const bool with_junk = rng.uniform() < 0.4;

        auto random_set = [&](std::size_t n) {
            LabeledEmbeddingSet set;
            set.embeddings = Mat(n, d);
            for (double& v : set.embeddings.data) v = rng.uniform(-1.0, 1.0);
            for (std::size_t i = 0; i < n; ++i) {
                int id = static_cast<int>(rng.uniform_int(0, 6));
                if (with_junk && rng.uniform() < 0.1) id = -1;
                set.identities.push_back(id);
                if (with_cams) set.cameras.push_back(static_cast<int>(rng.uniform_int(1, 3)));
            }
            return set;
        };
        const LabeledEmbeddingSet query = random_set(nq);
        const LabeledEmbeddingSet gallery = random_set(ng);

        const EvalReport mine = evaluate(query, gallery, Metric::Euclidean);

        std::vector<std::vector<double>> dist(nq, std::vector<double>(ng));
        for (std::size_t i = 0; i < nq; ++i)
            for (std::size_t j = 0; j < ng; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < d; ++k) {
                    const double diff = query.embeddings.at(i, k) - gallery.embeddings.at(j, k);
                    acc += diff * diff;
                }
                dist[i][j] = std::sqrt(acc);
            }
        const oracles::RetrievalResult expected = oracles::evaluate(
            dist, query.identities, query.cameras, gallery.identities, gallery.cameras);

        CHECK(mine.queries_used == expected.used);
        CHECK(mine.queries_dropped == expected.dropped);
        CHECK(mine.map == doctest::Approx(expected.map).epsilon(1e-12));
        REQUIRE(mine.cmc.size() == expected.cmc.size());
        for (std::size_t k = 0; k < mine.cmc.size(); ++k)
            CHECK(mine.cmc[k] == doctest::Approx(expected.cmc[k]).epsilon(1e-12));
    }
}

TEST_CASE("cmc is monotonically non-decreasing and permutation-invariant") {
    Rng rng(5150);
    for (int trial = 0; trial < 20; ++trial) {
        const std::size_t nq = 6, ng = 25, d = 4;
        LabeledEmbeddingSet query, gallery;
        query.embeddings = Mat(nq, d);
        gallery.embeddings = Mat(ng, d);
        for (double& v : query.embeddings.data) v = rng.uniform(-1.0, 1.0);
        for (double& v : gallery.embeddings.data) v = rng.uniform(-1.0, 1.0);
        for (std::size_t i = 0; i < nq; ++i)
            query.identities.push_back(static_cast<int>(rng.uniform_int(0, 4)));
        for (std::size_t j = 0; j < ng; ++j)
            gallery.identities.push_back(static_cast<int>(rng.uniform_int(0, 4)));

        const EvalReport a = evaluate(query, gallery, Metric::Euclidean);
        for (std::size_t k = 1; k < a.cmc.size(); ++k) CHECK(a.cmc[k] >= a.cmc[k - 1]);
        CHECK(a.map >= 0.0);
        CHECK(a.map <= 1.0);

        // permute the gallery
        std::vector<std::size_t> perm(ng);
        for (std::size_t i = 0; i < ng; ++i) perm[i] = i;
        rng.shuffle(perm);
        LabeledEmbeddingSet shuffled;
        shuffled.embeddings = Mat(ng, d);
        for (std::size_t i = 0; i < ng; ++i) {
            shuffled.identities.push_back(gallery.identities[perm[i]]);
            for (std::size_t k = 0; k < d; ++k)
                shuffled.embeddings.at(i, k) = gallery.embeddings.at(perm[i], k);
        }
        const EvalReport b = evaluate(query, shuffled, Metric::Euclidean);
        CHECK(a.map == doctest::Approx(b.map).epsilon(1e-12));
        for (std::size_t k = 0; k < a.cmc.size(); ++k)
            CHECK(a.cmc[k] == doctest::Approx(b.cmc[k]).epsilon(1e-12));
    }
}

TEST_CASE("mAP is 1 exactly when every query ranks all its matches first") {
    const auto query = make_set({{0.0}, {10.0}}, {1, 2});
    const auto gallery = make_set({{0.1}, {0.2}, {9.9}, {3.0}}, {1, 1, 2, 3});
    const EvalReport report = evaluate(query, gallery, Metric::Euclidean);
    CHECK(report.map == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("cluster_ratio: 1-D classes A={0,2} B={10,12} give R=0.2") {
    const Mat emb = from_rows({{0.0}, {2.0}, {10.0}, {12.0}});
    const ClusterStats stats = cluster_ratio(emb, {0, 0, 1, 1}, Metric::Euclidean);
    CHECK(stats.intra == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(stats.inter == doctest::Approx(10.0).epsilon(1e-12));
    CHECK(stats.ratio == doctest::Approx(0.2).epsilon(1e-12));
}

TEST_CASE("cluster_ratio: duplicated points per class give R=0") {
    const Mat emb = from_rows({{1.0, 1.0}, {1.0, 1.0}, {5.0, 5.0}, {5.0, 5.0}});
    CHECK(cluster_ratio(emb, {0, 0, 1, 1}, Metric::Euclidean).ratio == 0.0);
}

TEST_CASE("cluster_ratio is invariant under global isometry") {
    Rng rng(31);
    Mat emb(12, 2);
    std::vector<int> labels(12);
    for (double& v : emb.data) v = rng.uniform(-1.0, 1.0);
    for (std::size_t i = 0; i < 12; ++i) labels[i] = static_cast<int>(i % 3);
    const double base = cluster_ratio(emb, labels, Metric::Euclidean).ratio;

    const double theta = 0.831;
    Mat moved(12, 2);
    for (std::size_t i = 0; i < 12; ++i) {
        const double x = emb.at(i, 0), y = emb.at(i, 1);
        moved.at(i, 0) = std::cos(theta) * x - std::sin(theta) * y + 4.2;
        moved.at(i, 1) = std::sin(theta) * x + std::cos(theta) * y - 1.3;
    }
    CHECK(cluster_ratio(moved, labels, Metric::Euclidean).ratio ==
          doctest::Approx(base).epsilon(1e-9));
}

TEST_CASE("cluster_ratio rejects a single class") {
    const Mat emb = from_rows({{0.0}, {1.0}});
    CHECK_THROWS_AS(cluster_ratio(emb, {3, 3}, Metric::Euclidean), DataError);
}

TEST_CASE("norm_stats examples") {
    SUBCASE("norms {3,4}") {
        const Mat emb = from_rows({{3.0, 0.0}, {0.0, 4.0}});
        const NormStats stats = norm_stats(emb);
        CHECK(stats.mean == doctest::Approx(3.5).epsilon(1e-12));
        CHECK(stats.stddev == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(*stats.cv == doctest::Approx(0.5 / 3.5).epsilon(1e-12));
    }
    SUBCASE("equal norms give zero spread") {
        const Mat emb = from_rows({{1.0, 0.0}, {0.0, -1.0}, {std::sqrt(0.5), std::sqrt(0.5)}});
        const NormStats stats = norm_stats(emb);
        CHECK(stats.stddev == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(*stats.cv == doctest::Approx(0.0).epsilon(1e-12));
    }
    SUBCASE("scaling embeddings scales mean and stddev, leaves cv") {
        Rng rng(77);
        Mat emb(9, 3);
        for (double& v : emb.data) v = rng.uniform(-2.0, 2.0);
        const NormStats base = norm_stats(emb);
        Mat scaled = emb;
        for (double& v : scaled.data) v *= 3.5;
        const NormStats s = norm_stats(scaled);
        CHECK(s.mean == doctest::Approx(3.5 * base.mean).epsilon(1e-12));
        CHECK(s.stddev == doctest::Approx(3.5 * base.stddev).epsilon(1e-9));
        CHECK(*s.cv == doctest::Approx(*base.cv).epsilon(1e-9));
    }
    SUBCASE("all-zero embeddings report no cv") {
        const Mat emb = from_rows({{0.0, 0.0}});
        CHECK_FALSE(norm_stats(emb).cv.has_value());
    }
}

TEST_CASE("scatter export: rows, exact round-trip, degenerate cases") {
    const fs::path path = fs::temp_directory_path() / "reidkit_scatter.tsv";
    SUBCASE("three samples give header plus three rows") {
        const Mat emb = from_rows({{0.1, 0.2}, {1.0 / 3.0, -2.5}, {1e-17, 3.0}});
        export_embedding_scatter(emb, {0, 1, 2}, path);
        std::ifstream is(path);
        std::string header;
        std::getline(is, header);
        CHECK(header == "x\ty\tlabel");
        double x, y;
        int label;
        for (std::size_t i = 0; i < 3; ++i) {
            REQUIRE((is >> x >> y >> label));
            CHECK(x == emb.at(i, 0));  // full-precision round trip
            CHECK(y == emb.at(i, 1));
            CHECK(label == static_cast<int>(i));
        }
        CHECK_FALSE(static_cast<bool>(is >> x));
    }
    SUBCASE("empty set gives a header-only file") {
        export_embedding_scatter(Mat(0, 2), {}, path);
        std::ifstream is(path);
        std::string line;
        CHECK(std::getline(is, line));
        CHECK_FALSE(std::getline(is, line));
    }
    SUBCASE("non-2-D embeddings are rejected") {
        CHECK_THROWS_AS(export_embedding_scatter(Mat(1, 3), {0}, path), ShapeError);
    }
    fs::remove(path);
}

TEST_CASE("embedding files round-trip bit-exactly in both forms") {
    Rng rng(3331);
    LabeledEmbeddingSet set;
    set.embeddings = Mat(7, 5);
    for (double& v : set.embeddings.data) v = rng.normal(0.0, 2.0);
    for (std::size_t i = 0; i < 7; ++i) {
        set.identities.push_back(static_cast<int>(rng.uniform_int(-1, 30)));
        set.cameras.push_back(static_cast<int>(rng.uniform_int(1, 6)));
    }

    const fs::path bin = fs::temp_directory_path() / "reidkit_emb.bin";
    const fs::path txt = fs::temp_directory_path() / "reidkit_emb.tsv";
    write_embeddings_binary(bin, set, "cafe0123");
    write_embeddings_text(txt, set, "cafe0123");

    for (const fs::path& path : {bin, txt}) {
        std::string tag;
        const LabeledEmbeddingSet back = read_embeddings(path, &tag);
        CHECK(tag == "cafe0123");
        CHECK(back.embeddings.rows == set.embeddings.rows);
        CHECK(back.embeddings.cols == set.embeddings.cols);
        CHECK(back.embeddings.data == set.embeddings.data);
        CHECK(back.identities == set.identities);
        CHECK(back.cameras == set.cameras);
    }
    CHECK_THROWS_AS(read_embeddings(fs::temp_directory_path() / "missing_embeddings.bin"),
                    DataError);
    fs::remove(bin);
    fs::remove(txt);
}

TEST_CASE("eval report file is written with stable fields") {
    EvalReport report;
    report.cmc = {0.5, 1.0};
    report.map = 0.75;
    report.metric = Metric::Cosine;
    report.feature = "f_i";
    report.queries_used = 2;
    report.norms.mean = 1.0;
    report.norms.stddev = 0.1;
    report.norms.cv = 0.1;
    const fs::path path = fs::temp_directory_path() / "reidkit_report.tsv";
    write_eval_report(path, report, "deadbeefdeadbeef");
    std::ifstream is(path);
    std::string all((std::istreambuf_iterator<char>(is)), {});
    CHECK(all.find("# manifest deadbeefdeadbeef") != std::string::npos);
    CHECK(all.find("metric\tcosine") != std::string::npos);
    CHECK(all.find("cmc_2\t1") != std::string::npos);
    fs::remove(path);
}
