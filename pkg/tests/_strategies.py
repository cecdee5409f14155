from hypothesis import strategies as st

from stepset import ALPHA, BUILTINS, Builtin, Complement, Diff, Intersect, Union

levels = st.one_of(st.just(ALPHA), st.floats(min_value=0.0, max_value=1.0, allow_nan=False))

leaves = st.one_of(
    st.builds(Builtin, st.sampled_from([n for n in BUILTINS if n != "topk"]), levels),
    st.builds(lambda k: Builtin("topk", None, k), st.integers(min_value=1, max_value=10**6)),
)


def _extend(children):
    return st.one_of(
        st.builds(Union, children, children),
        st.builds(Intersect, children, children),
        st.builds(Diff, children, children),
        st.builds(Complement, children, levels),
    )


exprs = st.recursive(leaves, _extend, max_leaves=12)

pvalues = st.lists(
    st.one_of(st.sampled_from([0.0, 1.0, 0.01, 0.05, 0.5]), st.floats(min_value=0.0, max_value=1.0)),
    min_size=1,
    max_size=8,
)
