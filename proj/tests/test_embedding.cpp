#include <doctest.h>

#include <cmath>
#include <map>

#include "hmdn/embedding.hpp"
#include "hmdn/errors.hpp"
#include "hmdn/rng.hpp"

using namespace hmdn;

namespace {

FeatureSchema two_feature_schema() {
  FeatureSchema schema;
  schema.features.push_back({"kind", 4, 2, true, "kind", 1});
  schema.features.push_back({"item", 6, 3, false, "", 0});
  return schema;
}

ExampleBatch make_batch(std::vector<std::vector<std::int32_t>> ids,
                        std::vector<double> labels) {
  ExampleBatch b;
  b.ids = std::move(ids);
  b.labels = std::move(labels);
  return b;
}

}  // namespace

TEST_SUITE_BEGIN("embedding");

TEST_CASE("embed_batch is a plain table lookup") {
  FeatureSchema schema;
  schema.features.push_back({"only", 4, 2, true, "only", 1});
  Rng rng(1);
  EmbeddingTables tables = EmbeddingTables::create(schema, rng);
  tables.tables[0](3, 0) = 0.1;
  tables.tables[0](3, 1) = 0.2;

  const auto batch = make_batch({{3}}, {1.0});
  const EmbedResult out = embed_batch(schema, tables, batch);
  CHECK(out.x(0, 0) == 0.1);
  CHECK(out.x(0, 1) == 0.2);
  CHECK(out.xb(0, 0) == 0.1);
  CHECK(out.xb(0, 1) == 0.2);
}

TEST_CASE("embed_batch concatenates feature embeddings in schema order") {
  const FeatureSchema schema = two_feature_schema();
  Rng rng(2);
  const EmbeddingTables tables = EmbeddingTables::create(schema, rng);
  const auto batch = make_batch({{1, 2}, {5, 0}}, {0.0, 1.0});
  const EmbedResult out = embed_batch(schema, tables, batch);
  CHECK(out.x.cols() == 5);
  CHECK(out.xb.cols() == 2);
  CHECK(out.x.rows() == 2);
  // First two x columns belong to "kind", the rest to "item".
  for (std::size_t i = 0; i < 2; ++i) {
    for (std::size_t d = 0; d < 2; ++d) {
      CHECK(out.x(i, d) == tables.tables[0](batch.ids[0][i], d));
    }
    for (std::size_t d = 0; d < 3; ++d) {
      CHECK(out.x(i, 2 + d) == tables.tables[1](batch.ids[1][i], d));
    }
  }
}

TEST_CASE("slice map reconstructs embed_batch output from single lookups") {
  Rng rng(3);
  FeatureSchema schema;
  schema.features.push_back({"a", 5, 4, true, "a", 1});
  schema.features.push_back({"b", 3, 2, false, "", 0});
  schema.features.push_back({"c", 7, 3, true, "c", 2});
  const EmbeddingTables tables = EmbeddingTables::create(schema, rng);

  ExampleBatch batch;
  batch.ids.resize(3);
  for (int i = 0; i < 20; ++i) {
    batch.ids[0].push_back(static_cast<std::int32_t>(rng.next_below(6)));
    batch.ids[1].push_back(static_cast<std::int32_t>(rng.next_below(4)));
    batch.ids[2].push_back(static_cast<std::int32_t>(rng.next_below(8)));
    batch.labels.push_back(static_cast<double>(rng.next_below(2)));
  }
  const EmbedResult out = embed_batch(schema, tables, batch);
  CHECK(out.xb.cols() == 7);

  for (const auto& slice : out.slices) {
    const Matrix& table = tables.tables[slice.feature];
    for (std::size_t i = 0; i < batch.size(); ++i) {
      const auto row = table.row(batch.ids[slice.feature][i]);
      for (std::size_t d = 0; d < slice.dim; ++d) {
        CHECK(out.x(i, slice.x_begin + d) == row[d]);
        if (slice.xb_begin >= 0) {
          CHECK(out.xb(i, static_cast<std::size_t>(slice.xb_begin) + d) == row[d]);
        }
      }
    }
  }
}

TEST_CASE("out-of-range ids are an ingestion error naming feature and row") {
  const FeatureSchema schema = two_feature_schema();
  Rng rng(4);
  const EmbeddingTables tables = EmbeddingTables::create(schema, rng);
  const auto batch = make_batch({{1, 7}, {0, 0}}, {0.0, 1.0});
  CHECK_THROWS_WITH_AS(embed_batch(schema, tables, batch),
                       doctest::Contains("'kind'"), DataError);
  CHECK_THROWS_WITH_AS(embed_batch(schema, tables, batch),
                       doctest::Contains("row 1"), DataError);
}

TEST_CASE("unreferenced table rows never affect the output") {
  const FeatureSchema schema = two_feature_schema();
  Rng rng(5);
  EmbeddingTables tables = EmbeddingTables::create(schema, rng);
  const auto batch = make_batch({{1, 2}, {3, 4}}, {0.0, 1.0});
  const EmbedResult before = embed_batch(schema, tables, batch);
  tables.tables[0](4, 0) = 1e9;  // row 4 of "kind" is not referenced
  tables.tables[1](0, 2) = -1e9;
  const EmbedResult after = embed_batch(schema, tables, batch);
  CHECK(before.x == after.x);
  CHECK(before.xb == after.xb);
}

TEST_CASE("zero upstream gradients produce zero row gradients") {
  const FeatureSchema schema = two_feature_schema();
  Rng rng(6);
  const EmbeddingTables tables = EmbeddingTables::create(schema, rng);
  const auto batch = make_batch({{1, 2}, {3, 4}}, {0.0, 1.0});
  const EmbedResult out = embed_batch(schema, tables, batch);
  const auto grads = embedding_gradients(schema, batch, Matrix(2, 5), Matrix(2, 2),
                                         out.slices);
  for (const auto& table : grads) {
    for (const auto& [row, g] : table) {
      for (double v : g) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("single example row gradient equals its gradient slice") {
  const FeatureSchema schema = two_feature_schema();
  Rng rng(7);
  const EmbeddingTables tables = EmbeddingTables::create(schema, rng);
  const auto batch = make_batch({{2}, {5}}, {1.0});
  const EmbedResult out = embed_batch(schema, tables, batch);

  Matrix gx(1, 5);
  for (std::size_t c = 0; c < 5; ++c) gx(0, c) = 0.1 * static_cast<double>(c + 1);
  Matrix gxb(1, 2);
  gxb(0, 0) = 10.0;
  gxb(0, 1) = 20.0;
  const auto grads = embedding_gradients(schema, batch, gx, gxb, out.slices);

  // Distribution feature "kind" collects both the x and x_b contributions.
  const auto& kind_grad = grads[0].at(2);
  CHECK(kind_grad[0] == doctest::Approx(0.1 + 10.0));
  CHECK(kind_grad[1] == doctest::Approx(0.2 + 20.0));
  const auto& item_grad = grads[1].at(5);
  CHECK(item_grad[0] == doctest::Approx(0.3));
  CHECK(item_grad[1] == doctest::Approx(0.4));
  CHECK(item_grad[2] == doctest::Approx(0.5));
}

TEST_CASE("duplicate ids accumulate the sum over examples") {
  FeatureSchema schema;
  schema.features.push_back({"f", 3, 2, true, "f", 1});
  Rng rng(8);
  const EmbeddingTables tables = EmbeddingTables::create(schema, rng);

  ExampleBatch batch;
  batch.ids = {{1, 2, 1, 1, 2}};
  batch.labels = {0, 1, 0, 1, 1};
  const EmbedResult out = embed_batch(schema, tables, batch);

  Matrix gx(5, 2);
  Matrix gxb(5, 2);
  Rng grng(9);
  for (double& v : gx.data()) v = grng.uniform(-1, 1);
  for (double& v : gxb.data()) v = grng.uniform(-1, 1);
  const auto grads = embedding_gradients(schema, batch, gx, gxb, out.slices);

  // Per-example accumulation oracle.
  std::map<std::int32_t, std::vector<double>> expected;
  for (std::size_t i = 0; i < 5; ++i) {
    auto& acc = expected.try_emplace(batch.ids[0][i], std::vector<double>(2, 0.0))
                    .first->second;
    for (std::size_t d = 0; d < 2; ++d) acc[d] += gx(i, d) + gxb(i, d);
  }
  CHECK(grads[0].size() == expected.size());
  for (const auto& [row, g] : expected) {
    const auto& got = grads[0].at(row);
    for (std::size_t d = 0; d < 2; ++d) {
      CHECK(got[d] == doctest::Approx(g[d]).epsilon(1e-12));
    }
  }
}

TEST_CASE("x_b width is the sum of distribution feature dims") {
  Rng rng(10);
  for (int trial = 0; trial < 30; ++trial) {
    FeatureSchema schema;
    std::size_t expected = 0;
    const std::size_t n_features = 1 + rng.next_below(5);
    bool any_dist = false;
    for (std::size_t f = 0; f < n_features; ++f) {
      FeatureSpec spec;
      spec.name = "f" + std::to_string(f);
      spec.cardinality = 2 + static_cast<std::int32_t>(rng.next_below(5));
      spec.embedding_dim = 1 + static_cast<std::int32_t>(rng.next_below(6));
      spec.distribution_feature = rng.next_below(2) == 0;
      if (spec.distribution_feature) {
        spec.distribution_type = spec.name;
        expected += static_cast<std::size_t>(spec.embedding_dim);
        any_dist = true;
      }
      schema.features.push_back(std::move(spec));
    }
    if (!any_dist) {
      schema.features[0].distribution_feature = true;
      schema.features[0].distribution_type = schema.features[0].name;
      expected += static_cast<std::size_t>(schema.features[0].embedding_dim);
    }
    CHECK(schema.xb_dim() == expected);
  }
}

TEST_CASE("schema validation catches duplicates and missing distribution features") {
  FeatureSchema schema;
  schema.features.push_back({"a", 3, 2, false, "", 0});
  CHECK_THROWS_AS(schema.validate(), ConfigError);  // no distribution feature
  schema.features.push_back({"a", 3, 2, true, "a", 1});
  CHECK_THROWS_AS(schema.validate(), ConfigError);  // duplicate name
}

TEST_SUITE_END();
