"""Dataset generation, PNG I/O, unpaired sampling."""

import numpy as np
import pytest

import domainswap.tensor as T
from domainswap.data import (ALLOWED_SIZES, DomainSpec, UnpairedSampler,
                             default_domain_specs, generate_dataset, list_images,
                             load_image, load_image_dir, read_png, save_image,
                             write_png)
from domainswap.errors import ConfigError, ImageFormatError
from domainswap.tensor import Tensor
from domainswap.training import AdamState, adam_step


class TestGeneration:
    def test_reruns_are_byte_identical(self, tmp_path):
        spec = DomainSpec("a", "striped-triangles", 16, 5, seed=3)
        first = generate_dataset(spec, tmp_path / "one")
        second = generate_dataset(spec, tmp_path / "two")
        for p1, p2 in zip(first, second):
            assert p1.read_bytes() == p2.read_bytes()

    def test_exact_count_and_names(self, tmp_path):
        spec = DomainSpec("b", "shaded-ellipses", 16, 7, seed=0)
        paths = generate_dataset(spec, tmp_path)
        assert len(paths) == 7
        assert [p.name for p in paths] == [f"{i:05d}.png" for i in range(7)]

    def test_invalid_specs_rejected(self):
        with pytest.raises(ConfigError):
            DomainSpec("a", "striped-triangles", 15, 5, 0)
        with pytest.raises(ConfigError):
            DomainSpec("a", "striped-triangles", 16, 1, 0)
        with pytest.raises(ConfigError):
            DomainSpec("a", "wavy-lines", 16, 5, 0)

    @pytest.mark.parametrize("size", ALLOWED_SIZES)
    def test_all_sizes_render(self, tmp_path, size):
        for spec in default_domain_specs(size=size, count=2, seed=1):
            for p in generate_dataset(spec, tmp_path / str(size)):
                assert read_png(p).shape == (size, size, 3)

    def test_domains_are_visually_distinct(self, tmp_path):
        specs = default_domain_specs(size=16, count=8, seed=2)
        a = np.stack([read_png(p) for p in generate_dataset(specs[0], tmp_path)])
        b = np.stack([read_png(p) for p in generate_dataset(specs[1], tmp_path)])
        # ellipse-domain backgrounds are bright; triangle-domain backgrounds dark
        assert b.mean() - a.mean() > 40


class TestImageIO:
    def test_pixel_value_mapping(self, tmp_path):
        px = np.zeros((16, 16, 3), np.uint8)
        px[0, 0] = [0, 128, 255]
        write_png(tmp_path / "m.png", px)
        t = load_image(tmp_path / "m.png")
        assert t.data[0, 0, 0] == -1.0
        assert t.data[1, 0, 0] == pytest.approx(128 / 127.5 - 1.0, abs=1e-7)
        assert t.data[2, 0, 0] == 1.0

    def test_save_load_roundtrip_byte_identical(self, tmp_path, rng):
        px = rng.integers(0, 256, size=(32, 32, 3)).astype(np.uint8)
        write_png(tmp_path / "orig.png", px)
        save_image(load_image(tmp_path / "orig.png"), tmp_path / "again.png")
        assert (tmp_path / "orig.png").read_bytes() == (tmp_path / "again.png").read_bytes()

    def test_save_clamps_out_of_range(self, tmp_path):
        t = Tensor(np.full((3, 16, 16), 2.0, dtype=np.float32))
        save_image(t, tmp_path / "c.png")
        assert np.all(read_png(tmp_path / "c.png") == 255)

    def test_nonsquare_rejected(self, tmp_path):
        write_png(tmp_path / "ns.png", np.zeros((8, 16, 3), np.uint8))
        with pytest.raises(ImageFormatError, match="non-square"):
            load_image(tmp_path / "ns.png")

    def test_non_png_rejected(self, tmp_path):
        (tmp_path / "fake.png").write_bytes(b"definitely not a png")
        with pytest.raises(ImageFormatError):
            load_image(tmp_path / "fake.png")

    def test_unsupported_color_type_rejected(self, tmp_path):
        from PIL import Image
        Image.new("L", (16, 16)).save(tmp_path / "gray.png")
        with pytest.raises(ImageFormatError, match="8-bit RGB"):
            load_image(tmp_path / "gray.png")

    def test_reads_foreign_encoder_output(self, tmp_path, rng):
        # other writers pick other scanline filters; the decoder must cope
        from PIL import Image
        px = rng.integers(0, 256, size=(32, 32, 3)).astype(np.uint8)
        Image.fromarray(px).save(tmp_path / "pil.png")
        assert np.array_equal(read_png(tmp_path / "pil.png"), px)

    def test_directory_order_is_name_sorted(self, tmp_path):
        for name, value in (("00002.png", 20), ("00000.png", 0), ("00001.png", 10)):
            write_png(tmp_path / name, np.full((16, 16, 3), value, np.uint8))
        batch = load_image_dir(tmp_path)
        values = ((batch[:, 0, 0, 0] + 1) * 127.5).round()
        assert list(values) == [0, 10, 20]
        assert [p.name for p in list_images(tmp_path)] == ["00000.png", "00001.png", "00002.png"]


class TestSampler:
    def test_equal_seeds_identical_streams(self, toy_dataset):
        s1 = UnpairedSampler(toy_dataset / "a", toy_dataset / "b", 5)
        s2 = UnpairedSampler(toy_dataset / "a", toy_dataset / "b", 5)
        for _ in range(40):
            (a1, b1), (a2, b2) = s1.next(), s2.next()
            assert np.array_equal(a1.data, a2.data)
            assert np.array_equal(b1.data, b2.data)

    def test_each_image_once_per_epoch(self, toy_dataset):
        sampler = UnpairedSampler(toy_dataset / "a", toy_dataset / "b", 1)
        n = len(sampler.images["a"])
        seen = [sampler._draw("a") for _ in range(n)]
        assert sorted(seen) == list(range(n))
        seen2 = [sampler._draw("a") for _ in range(n)]
        assert sorted(seen2) == list(range(n))
        assert seen != seen2  # a fresh shuffle, not a repeat

    def test_index_streams_uncorrelated(self, tmp_path):
        for spec in default_domain_specs(size=16, count=64, seed=4):
            generate_dataset(spec, tmp_path)
        sampler = UnpairedSampler(tmp_path / "a", tmp_path / "b", 9)
        ia = np.array([sampler._draw("a") for _ in range(10_000)], dtype=float)
        sampler2 = UnpairedSampler(tmp_path / "a", tmp_path / "b", 9)
        ib = np.array([sampler2._draw("b") for _ in range(10_000)], dtype=float)
        r = np.corrcoef(ia, ib)[0, 1]
        assert abs(r) < 0.05

    def test_state_restore_continues_exactly(self, toy_dataset):
        s1 = UnpairedSampler(toy_dataset / "a", toy_dataset / "b", 2)
        for _ in range(17):
            s1.next()
        snapshot = s1.state()
        future = [s1.next() for _ in range(10)]
        s2 = UnpairedSampler(toy_dataset / "a", toy_dataset / "b", 2)
        s2.restore(snapshot)
        for (a1, b1), (a2, b2) in zip(future, (s2.next() for _ in range(10))):
            assert np.array_equal(a1.data, a2.data)
            assert np.array_equal(b1.data, b2.data)

    def test_batch_shape_and_range(self, toy_dataset):
        a, b = UnpairedSampler(toy_dataset / "a", toy_dataset / "b", 0).next()
        assert a.shape == (1, 3, 16, 16) and b.shape == (1, 3, 16, 16)
        assert np.all(np.abs(a.data) <= 1) and np.all(np.abs(b.data) <= 1)


class TestSeparability:
    def test_two_layer_classifier_distinguishes_domains(self, tmp_path):
        # FID comparisons are only meaningful if the domains are separable; a
        # small classifier trained on an 80/20 split must reach 95% accuracy
        for spec in default_domain_specs(size=16, count=100, seed=7):
            generate_dataset(spec, tmp_path)
        xa = load_image_dir(tmp_path / "a", dtype=np.float64).reshape(100, -1)
        xb = load_image_dir(tmp_path / "b", dtype=np.float64).reshape(100, -1)
        rng = np.random.default_rng(0)
        perm = rng.permutation(100)
        tr, te = perm[:80], perm[80:]
        xtr = np.concatenate([xa[tr], xb[tr]])
        ytr = np.concatenate([np.zeros((80, 1)), np.ones((80, 1))])
        xte = np.concatenate([xa[te], xb[te]])
        yte = np.concatenate([np.zeros((20, 1)), np.ones((20, 1))])

        w1 = Tensor(rng.standard_normal((768, 16)) * np.sqrt(2 / 768), requires_grad=True, dtype=np.float64)
        b1 = Tensor(np.zeros(16), requires_grad=True, dtype=np.float64)
        w2 = Tensor(rng.standard_normal((16, 1)) * 0.3, requires_grad=True, dtype=np.float64)
        b2 = Tensor(np.zeros(1), requires_grad=True, dtype=np.float64)
        params = [("w1", w1), ("b1", b1), ("w2", w2), ("b2", b2)]
        state = AdamState(beta1=0.5)
        x_t, y_t = Tensor(xtr, dtype=np.float64), Tensor(ytr, dtype=np.float64)
        for _ in range(150):
            prob = T.clip(T.sigmoid(T.linear(T.relu(T.linear(x_t, w1, b1)), w2, b2)), 1e-7, 1 - 1e-7)
            nll = T.scale(T.mean(T.add(T.mul(y_t, T.log(prob)),
                                       T.mul(T.sub(1.0, y_t), T.log(T.sub(1.0, prob))))), -1.0)
            nll.backward()
            adam_step(params, None, state, lr=0.01)
            for _, p in params:
                p.grad = None
        with T.no_grad():
            logits = T.linear(T.relu(T.linear(Tensor(xte, dtype=np.float64), w1, b1)), w2, b2)
        accuracy = ((logits.data > 0) == (yte > 0.5)).mean()
        assert accuracy >= 0.95
