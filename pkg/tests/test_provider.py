import numpy as np
import pytest

from viewsphere.provider import (
    EmbeddingCache,
    Manifest,
    ManifestError,
    ManifestRecord,
    ablation_subsets,
    load_manifest,
    save_manifest,
)


def make_records(categories=("car",), views=("front", "back"), per=4, split="train", radius=5.0):
    records = []
    cell = 0
    for cat in categories:
        for view in views:
            for i in range(per):
                records.append(
                    ManifestRecord(
                        object_id=f"{cat}-{i}",
                        category=cat,
                        split=split,
                        image=f"images/{cat}_{view}_{i}.png",
                        cell=cell,
                        view=view,
                        radius=radius,
                    )
                )
                cell += 1
    return records


def write_manifest(tmp_path, manifest, with_files=True):
    path = tmp_path / "manifest.json"
    if with_files:
        for r in manifest.records:
            img = tmp_path / r.image
            img.parent.mkdir(parents=True, exist_ok=True)
            img.write_bytes(b"")
    save_manifest(manifest, path)
    return path


class TestManifest:
    def test_round_trip_identity(self, tmp_path, sphere2):
        manifest = Manifest(make_records(), sphere_checksum=sphere2.checksum,
                            provenance={"engine": "none"})
        path = write_manifest(tmp_path, manifest)
        loaded = load_manifest(path, sphere2)
        assert loaded.records == manifest.records
        assert loaded.sphere_checksum == manifest.sphere_checksum
        assert loaded.view_convention == manifest.view_convention
        # second round trip is byte-identical
        path2 = tmp_path / "again.json"
        save_manifest(loaded, path2)
        assert path2.read_text() == path.read_text()

    def test_well_formed_three_records(self, tmp_path, sphere2):
        records = make_records(per=1, views=("front", "back", "top"))
        path = write_manifest(tmp_path, Manifest(records, sphere2.checksum))
        loaded = load_manifest(path, sphere2)
        assert len(loaded.records) == 3

    def test_duplicate_key_rejected_with_name(self, tmp_path):
        r = make_records(per=1)[0]
        with pytest.raises(ManifestError) as err:
            Manifest((r, r), sphere_checksum="x")
        assert "duplicate" in str(err.value)
        assert r.object_id in str(err.value)

    def test_checksum_mismatch_rejected(self, tmp_path, sphere2, sphere3):
        manifest = Manifest(make_records(), sphere_checksum=sphere2.checksum)
        path = write_manifest(tmp_path, manifest)
        with pytest.raises(ManifestError) as err:
            load_manifest(path, sphere3)
        assert "checksum" in str(err.value)

    def test_missing_files_listed(self, tmp_path, sphere2):
        manifest = Manifest(make_records(per=2), sphere_checksum=sphere2.checksum)
        path = write_manifest(tmp_path, manifest, with_files=False)
        with pytest.raises(ManifestError) as err:
            load_manifest(path, sphere2)
        missing = [p for p in err.value.problems if "missing image" in p]
        assert len(missing) == len(manifest.records)
        loaded = load_manifest(path, sphere2, check_files=False)
        assert len(loaded.records) == len(manifest.records)

    def test_record_needs_cell_or_view(self):
        with pytest.raises(ValueError):
            ManifestRecord("o", "car", "train", "img.png")

    def test_view_paths_lookup(self):
        manifest = Manifest(make_records(per=2), sphere_checksum="x")
        r = manifest.records[0]
        paths = manifest.view_paths(r.object_id)
        assert paths[(r.cell, r.radius)] == r.image


class TestAblation:
    def make_manifest(self, per=20):
        return Manifest(
            make_records(categories=("car", "mug"), views=("front", "back", "top"), per=per),
            sphere_checksum="x",
        )

    def test_sizes_and_stratification(self):
        manifest = self.make_manifest(per=20)
        subsets = ablation_subsets(manifest, [20, 10, 4, 1], seed=5)
        for manifest_s, size in zip(subsets, [20, 10, 4, 1]):
            per_stratum = {}
            for r in manifest_s.records:
                per_stratum[(r.category, r.view)] = per_stratum.get((r.category, r.view), 0) + 1
            assert set(per_stratum.values()) == {size}
            assert len(per_stratum) == 6

    def test_nestedness(self):
        manifest = self.make_manifest(per=16)
        subsets = ablation_subsets(manifest, [16, 8, 4, 1], seed=9)
        keys = [set((r.object_id, r.cell) for r in s.records) for s in subsets]
        assert keys[3] <= keys[2] <= keys[1] <= keys[0]

    def test_full_size_is_identity(self):
        manifest = self.make_manifest(per=6)
        (subset,) = ablation_subsets(manifest, [6], seed=1)
        assert subset.records == manifest.records

    def test_deterministic_per_seed(self):
        manifest = self.make_manifest(per=12)
        a = ablation_subsets(manifest, [4], seed=3)[0]
        b = ablation_subsets(manifest, [4], seed=3)[0]
        c = ablation_subsets(manifest, [4], seed=4)[0]
        assert a.records == b.records
        assert a.records != c.records

    def test_insufficient_data_reports_shortfall(self):
        manifest = self.make_manifest(per=3)
        with pytest.raises(ManifestError) as err:
            ablation_subsets(manifest, [10], seed=0)
        assert "need 10" in str(err.value)

    def test_train_records_must_carry_view_labels(self):
        records = [
            ManifestRecord("o1", "car", "train", "a.png", cell=1, view=None, radius=5.0),
        ]
        manifest = Manifest(tuple(records), sphere_checksum="x")
        with pytest.raises(ManifestError):
            ablation_subsets(manifest, [1], seed=0)


class TestEmbeddingCache:
    def test_round_trip_bit_identical(self, tmp_path):
        rng = np.random.default_rng(0)
        cache = EmbeddingCache(dim=16)
        keys = ["a picture of a car from the front", "images/x.png", "weird é key"]
        for k in keys:
            cache.put(k, rng.standard_normal(16))
        path = tmp_path / "emb.cache"
        cache.save(path)
        loaded = EmbeddingCache.load(path)
        assert loaded.dim == 16
        assert set(loaded.keys()) == set(keys)
        for k in keys:
            assert np.array_equal(loaded[k], cache[k])

    def test_dim_mismatch_on_put_and_merge(self):
        cache = EmbeddingCache(dim=4)
        with pytest.raises(ValueError):
            cache.put("k", np.ones(5))
        other = EmbeddingCache(dim=8)
        with pytest.raises(ValueError):
            cache.merge(other)

    def test_lookup_miss_is_explicit(self):
        cache = EmbeddingCache(dim=2)
        assert cache.get("missing") is None
        with pytest.raises(KeyError):
            cache["missing"]

    def test_merge_combines_entries(self):
        a, b = EmbeddingCache(3), EmbeddingCache(3)
        a.put("x", [1, 2, 3])
        b.put("y", [4, 5, 6])
        a.merge(b)
        assert set(a.keys()) == {"x", "y"}

    def test_corrupt_file_rejected(self, tmp_path):
        path = tmp_path / "bad.cache"
        path.write_bytes(b"garbage\ndata\nxx")
        with pytest.raises(ValueError):
            EmbeddingCache.load(path)
