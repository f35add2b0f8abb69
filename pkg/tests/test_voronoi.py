import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sphinpaint.image import GrayImage
from sphinpaint.mask import InpaintingMask
from sphinpaint.voronoi import cell_errors, distance_transform, label_image


def brute_force(mask):
    w, h = mask.dims
    y, x = np.mgrid[0:h, 0:w]
    d2 = (x[..., None] - mask.xs) ** 2 + (y[..., None] - mask.ys) ** 2
    return d2.min(-1), d2.argmin(-1)   # argmin picks the lowest index on ties


def random_mask(r, w, h, n):
    flat = r.choice(w * h, size=n, replace=False)
    ys, xs = np.divmod(flat, w)
    return InpaintingMask((w, h), xs, ys, np.zeros(n))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 24), st.integers(1, 24), st.data())
def test_matches_brute_force(w, h, data):
    n = data.draw(st.integers(1, min(30, w * h)))
    seed = data.draw(st.integers(0, 2**32 - 1))
    mask = random_mask(np.random.default_rng(seed), w, h, n)
    vd = distance_transform(mask)
    d2, lab = brute_force(mask)
    assert np.array_equal(vd.dist2, d2)
    assert np.array_equal(vd.label, lab)
    assert vd.area.sum() == w * h
    assert np.all(vd.dist2 == np.round(vd.dist2))


def test_tie_goes_to_lowest_index():
    # pixel (1, 0) is equidistant from both seeds
    m = InpaintingMask((3, 1), [2, 0], [0, 0], [0, 0])
    vd = distance_transform(m)
    assert vd.label.tolist() == [[1, 0, 0]]
    m = InpaintingMask((3, 3), [0, 2], [0, 2], [0, 0])
    vd = distance_transform(m)
    assert vd.label[1, 1] == 0 and vd.label[0, 2] == 0 and vd.label[2, 0] == 0


def test_single_seed_areas():
    m = InpaintingMask((5, 4), [2], [1], [0])
    vd = distance_transform(m)
    assert vd.area.tolist() == [20]
    assert vd.dist2[3, 4] == 4 + 4


def test_cell_errors_sum_pixel_errors():
    r = np.random.default_rng(0)
    m = random_mask(r, 16, 16, 10)
    f = GrayImage(r.uniform(0, 255, (16, 16)))
    u = GrayImage(r.uniform(0, 255, (16, 16)))
    vd = distance_transform(m)
    cells, e = cell_errors(vd, f, u)
    assert cells.sum() == pytest.approx(((f.data - u.data) ** 2).sum())
    for j in range(10):
        assert cells[j] == pytest.approx(e[vd.label == j].sum())
    assert label_image(vd).data.max() <= 255


def test_outputs_immutable_and_empty_rejected():
    vd = distance_transform(InpaintingMask((3, 3), [1], [1], [0]))
    with pytest.raises(ValueError):
        vd.area[0] = 1
