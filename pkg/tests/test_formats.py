import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gaitmatch.clothing import Silhouette
from gaitmatch.errors import (
    FormatError,
    NonFiniteError,
    TreeViolationError,
    TruncatedError,
    UnsupportedFormatError,
    VersionError,
)
from gaitmatch.evaluation import EmbeddingSet
from gaitmatch.formats import (
    decode_pgm,
    dumps_embeddings,
    dumps_pose_sequence,
    dumps_tensor,
    encode_pgm,
    loads_embeddings,
    loads_pose_sequence,
    loads_tensor,
    read_embeddings,
    read_pose_sequence,
    read_rest_pose,
    read_silhouette,
    read_tensor,
    write_embeddings,
    write_pose_sequence,
    write_rest_pose,
    write_silhouette,
    write_tensor,
)
from gaitmatch.skeleton import PoseSequence
from gaitmatch.walker import WalkerSpec, synth_walker, walker_rest_pose

from _support import random_pose, random_rest

POSE_FIXTURE = """\
GAITMATCH-POSE 1
units m
frame_rate 25.0
joints 3
0 root -1 -
1 mid 0 2
2 tip 1 0
frames 2
0.0 0.0 1.0 0.0 0.5 1.0 0.25 0.5 1.0
0.1 0.0 1.0 0.1 0.5 1.0 0.1 0.5 1.25
"""


def break_line(text, lineno, new):
    lines = text.split("\n")
    lines[lineno - 1] = new
    return "\n".join(lines)


class TestPose:
    def test_hand_written_fixture(self):
        seq = loads_pose_sequence(POSE_FIXTURE)
        assert seq.topology.joint_names == ("root", "mid", "tip")
        assert seq.topology.parents == (-1, 0, 1)
        assert seq.topology.reference_joints == (None, 2, 0)
        assert seq.frame_rate == 25.0
        np.testing.assert_array_equal(seq.frames[0], [[0, 0, 1], [0, 0.5, 1], [0.25, 0.5, 1]])
        np.testing.assert_array_equal(seq.frames[1, 2], [0.1, 0.5, 1.25])
        assert dumps_pose_sequence(seq) == POSE_FIXTURE

    def test_file_round_trip_is_byte_stable(self, tmp_path):
        seq = synth_walker(WalkerSpec(frame_count=7, noise=0.05, seed=3))
        write_pose_sequence(seq, tmp_path / "a.pose")
        back = read_pose_sequence(tmp_path / "a.pose")
        np.testing.assert_array_equal(back.frames, seq.frames)
        assert back.topology == seq.topology
        write_pose_sequence(back, tmp_path / "b.pose")
        assert (tmp_path / "a.pose").read_bytes() == (tmp_path / "b.pose").read_bytes()

    def test_rest_pose_round_trip(self, tmp_path):
        rest = walker_rest_pose()
        write_rest_pose(rest, tmp_path / "r.pose")
        np.testing.assert_array_equal(read_rest_pose(tmp_path / "r.pose").positions, rest.positions)

    def test_cycle_names_joint(self):
        text = POSE_FIXTURE.replace("1 mid 0 2", "1 mid 2 -").replace("2 tip 1 0", "2 tip 1 -")
        with pytest.raises(TreeViolationError) as exc:
            loads_pose_sequence(text, "cyc.pose")
        assert exc.value.joint in ("mid", "tip")
        assert exc.value.line in (6, 7)
        assert exc.value.location["path"] == "cyc.pose"

    def test_version_mismatch(self):
        with pytest.raises(VersionError) as exc:
            loads_pose_sequence(break_line(POSE_FIXTURE, 1, "GAITMATCH-POSE 2"))
        assert (exc.value.line, exc.value.field) == (1, "version")

    def test_wrong_magic(self):
        with pytest.raises(VersionError):
            loads_pose_sequence("hello\n")

    def test_non_finite_located(self):
        text = break_line(POSE_FIXTURE, 10, "0.1 0.0 1.0 0.1 nan 1.0 0.1 0.5 1.25")
        with pytest.raises(NonFiniteError) as exc:
            loads_pose_sequence(text)
        assert exc.value.line == 10
        assert exc.value.field == "mid.y"

    def test_truncated(self):
        text = "\n".join(POSE_FIXTURE.split("\n")[:9]) + "\n"
        with pytest.raises(TruncatedError) as exc:
            loads_pose_sequence(text)
        assert exc.value.line == 10

    def test_short_frame_row(self):
        with pytest.raises(FormatError) as exc:
            loads_pose_sequence(break_line(POSE_FIXTURE, 9, "0 0 1"))
        assert exc.value.line == 9

    def test_units_must_be_metres(self):
        with pytest.raises(FormatError) as exc:
            loads_pose_sequence(break_line(POSE_FIXTURE, 2, "units mm"))
        assert exc.value.field == "units"


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_pose_round_trip(seed):
    rng = np.random.default_rng(seed)
    rest = random_rest(rng)
    frames = np.stack([random_pose(rng, rest) * rng.uniform(1e-3, 1e3) for _ in range(3)])
    seq = PoseSequence(rest.topology, frames, float(rng.uniform(1, 240)))
    text = dumps_pose_sequence(seq)
    back = loads_pose_sequence(text)
    assert np.array_equal(back.frames, seq.frames) and back.frame_rate == seq.frame_rate
    assert dumps_pose_sequence(back) == text


class TestSilhouette:
    def test_checkerboard_round_trip(self, tmp_path):
        sil = Silhouette(np.array([[1, 0], [0, 1]], dtype=bool))
        write_silhouette(sil, tmp_path / "a.pgm")
        back = read_silhouette(tmp_path / "a.pgm")
        np.testing.assert_array_equal(back.mask, sil.mask)
        write_silhouette(back, tmp_path / "b.pgm")
        assert (tmp_path / "a.pgm").read_bytes() == (tmp_path / "b.pgm").read_bytes()
        assert set((tmp_path / "a.pgm").read_bytes()[-4:]) <= {0, 255}

    def test_gray_128_is_foreground(self):
        sil = decode_pgm(b"P5\n2 1\n255\n" + bytes([128, 0]))
        assert sil.mask.tolist() == [[True, False]]

    def test_header_comment_and_small_maxval(self):
        sil = decode_pgm(b"P5 # made by hand\n2 2\n1\n" + bytes([1, 0, 0, 1]))
        assert sil.mask.tolist() == [[True, False], [False, True]]

    def test_p2_rejected(self):
        with pytest.raises(UnsupportedFormatError):
            decode_pgm(b"P2\n2 1\n255\n128 0\n")

    def test_not_pgm(self):
        with pytest.raises(FormatError):
            decode_pgm(b"\x89PNG....")

    def test_truncated_payload(self):
        with pytest.raises(TruncatedError) as exc:
            decode_pgm(b"P5\n4 4\n255\n" + bytes(10))
        assert exc.value.field == "pixels"

    def test_random_mask_round_trip(self):
        rng = np.random.default_rng(0)
        mask = rng.random((37, 23)) < 0.4
        assert np.array_equal(decode_pgm(encode_pgm(Silhouette(mask))).mask, mask)


EMB_FIXTURE = """\
subject_id,covariate,d0,d1,d2
s1,THK0,1.0,0.0,0.5
s2,THK3,-0.25,2.0,0.0
"""


class TestEmbeddings:
    def test_two_row_fixture(self):
        e = loads_embeddings(EMB_FIXTURE)
        assert len(e) == 2 and e.dim == 3
        assert e.subject_ids == ("s1", "s2") and e.covariates == ("THK0", "THK3")
        np.testing.assert_array_equal(e.vectors, [[1.0, 0.0, 0.5], [-0.25, 2.0, 0.0]])
        assert dumps_embeddings(e) == EMB_FIXTURE

    def test_ragged_row_named(self):
        with pytest.raises(FormatError) as exc:
            loads_embeddings(EMB_FIXTURE + "s3,THK1,1.0,2.0\n")
        assert exc.value.line == 4
        assert "row 4" in str(exc.value)

    def test_non_numeric_cell(self):
        with pytest.raises(FormatError) as exc:
            loads_embeddings(EMB_FIXTURE.replace("-0.25", "abc"))
        assert (exc.value.line, exc.value.field) == (3, "d0")

    def test_header_only_is_empty(self):
        e = loads_embeddings("subject_id,covariate,d0,d1\n")
        assert len(e) == 0 and e.dim == 2

    def test_bad_header(self):
        with pytest.raises(FormatError):
            loads_embeddings("id,cov,d0\n")

    def test_file_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        e = EmbeddingSet(tuple(f"s{i}" for i in range(5)), ("THK0", None, "THK9", "free tag", "THK1"),
                         rng.normal(size=(5, 4)))
        write_embeddings(e, tmp_path / "a.csv")
        back = read_embeddings(tmp_path / "a.csv")
        assert back.covariates == e.covariates
        np.testing.assert_array_equal(back.vectors, e.vectors)
        write_embeddings(back, tmp_path / "b.csv")
        assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()


class TestTensor:
    def test_round_trip(self, tmp_path):
        x = np.random.default_rng(2).normal(size=(2, 3, 4, 5))
        write_tensor(x, tmp_path / "x.ten")
        np.testing.assert_array_equal(read_tensor(tmp_path / "x.ten"), x)
        assert dumps_tensor(read_tensor(tmp_path / "x.ten")) == (tmp_path / "x.ten").read_text()

    def test_bad_row_located(self):
        text = dumps_tensor(np.zeros((1, 1, 2, 2)))
        with pytest.raises(FormatError) as exc:
            loads_tensor(text.replace("0.0 0.0\n", "0.0\n", 1))
        assert exc.value.line == 3

    def test_version(self):
        with pytest.raises(VersionError):
            loads_tensor("GAITMATCH-TENSOR 9\nshape 1 1 1 1\n0.0\n")
