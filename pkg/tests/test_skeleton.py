import numpy as np
import pytest
from conftest import random_quats
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import matrix_chain_fk

from signscore import quat
from signscore.errors import ValidationError
from signscore.skeleton import (Joint, Skeleton, forward_kinematics,
                                load_skeleton, topological_order)


class TestSkeletonValidation:
    def test_default_asset_loads(self, hands32):
        assert hands32.n_joints == 32
        assert hands32.skeleton_id == "skeleton_hands32"
        roots = [j.id for j in hands32.joints if j.parent is None]
        assert roots == [0, 16]

    def test_missing_parent_rejected(self):
        with pytest.raises(ValidationError):
            Skeleton("bad", [Joint(0, "a", 7, (0, 0, 0))])

    def test_cycle_rejected(self):
        joints = [
            Joint(0, "root", None, (0, 0, 0)),
            Joint(1, "a", 2, (0, 0, 0)),
            Joint(2, "b", 1, (0, 0, 0)),
        ]
        with pytest.raises(ValidationError, match="cycle"):
            Skeleton("bad", joints)

    def test_self_parent_rejected(self):
        with pytest.raises(ValidationError):
            Skeleton("bad", [Joint(0, "a", 0, (0, 0, 0))])

    def test_duplicate_id_rejected(self):
        joints = [Joint(0, "a", None, (0, 0, 0)), Joint(0, "b", None, (0, 0, 0))]
        with pytest.raises(ValidationError):
            Skeleton("bad", joints)

    def test_save_load_round_trip(self, tmp_path, tiny_skeleton):
        path = tmp_path / "tiny.json"
        tiny_skeleton.save(path)
        back = load_skeleton(str(path))
        assert back.skeleton_id == tiny_skeleton.skeleton_id
        assert back.joints == tiny_skeleton.joints


class TestTopologicalOrder:
    def test_single_chain(self):
        joints = [
            Joint(0, "root", None, (0, 0, 0)),
            Joint(1, "a", 0, (0, 1, 0)),
            Joint(2, "b", 1, (0, 1, 0)),
        ]
        assert topological_order(Skeleton("chain", joints)) == [0, 1, 2]

    def test_two_chains_roots_first(self, hands32):
        order = topological_order(hands32)
        assert order[:2] == [0, 16]
        depth = {i: hands32.depths[i] for i in range(32)}
        # breadth-first with id tie-break
        assert order == sorted(range(32), key=lambda i: (depth[i], i))

    def test_is_permutation(self, hands32):
        assert sorted(topological_order(hands32)) == list(range(32))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(2, 24), st.integers(0, 10_000))
    def test_random_trees_parents_precede_children(self, n, seed):
        rng = np.random.default_rng(seed)
        joints = [Joint(0, "j0", None, (0, 0, 0))]
        for i in range(1, n):
            parent = int(rng.integers(0, i))
            joints.append(Joint(i, f"j{i}", parent, (0, 0, 0)))
        skel = Skeleton("rand", joints)
        order = topological_order(skel)
        assert sorted(order) == list(range(n))
        position = {j: k for k, j in enumerate(order)}
        for j in joints:
            if j.parent is not None:
                assert position[j.parent] < position[j.id]


class TestForwardKinematics:
    def test_rest_pose(self, hands32):
        rots = np.broadcast_to(quat.IDENTITY, (32, 4)).copy()
        pos = forward_kinematics(hands32, rots)
        # offsets sum along each chain
        for i in range(32):
            want = np.zeros(3)
            k = i
            while k >= 0:
                want += hands32.rest_offsets[k]
                k = int(hands32.parents[k])
            assert np.allclose(pos[i], want, atol=1e-12)

    def test_rigid_root_rotation(self, hands32):
        rots = np.broadcast_to(quat.IDENTITY, (32, 4)).copy()
        rest = forward_kinematics(hands32, rots)
        r = quat.from_axis_angle([0.0, 0.0, np.pi / 2])
        rots[0] = r
        rots[16] = r
        pos = forward_kinematics(hands32, rots)
        assert np.abs(pos - quat.rotate(r, rest)).max() <= 1e-9

    def test_matches_matrix_chain_oracle(self, hands32):
        rng = np.random.default_rng(23)
        for _ in range(25):
            frame = random_quats(rng, (32,))
            got = forward_kinematics(hands32, frame)
            want = matrix_chain_fk(hands32.parents, hands32.rest_offsets, frame)
            assert np.abs(got - want).max() <= 1e-9

    def test_root_rotation_equivariance(self, hands32):
        rng = np.random.default_rng(24)
        frame = random_quats(rng, (32,))
        base = forward_kinematics(hands32, frame)
        r = random_quats(rng, ())
        pre = frame.copy()
        for root in (0, 16):
            pre[root] = quat.compose(r, frame[root])
        got = forward_kinematics(hands32, pre)
        assert np.abs(got - quat.rotate(r, base)).max() <= 1e-9

    def test_shape_mismatch_rejected(self, hands32):
        with pytest.raises(ValidationError):
            forward_kinematics(hands32, np.zeros((5, 4)))


class TestAncestry:
    def test_ancestors_and_descendants(self, tiny_skeleton):
        assert tiny_skeleton.ancestors(2) == (1, 0)
        assert tiny_skeleton.ancestors(0) == ()
        assert tiny_skeleton.descendants(0) == (1, 2)

    def test_mask_rows_allow_self(self, hands32):
        mask = hands32.ancestry_mask()
        assert mask.diagonal().all()

    def test_mask_semantics(self, tiny_skeleton):
        mask = tiny_skeleton.ancestry_mask()
        order = list(tiny_skeleton.topo_order)
        for a, ja in enumerate(order):
            allowed = set(tiny_skeleton.ancestors(ja)) | {ja}
            for b, jb in enumerate(order):
                assert mask[a, b] == (jb in allowed)
