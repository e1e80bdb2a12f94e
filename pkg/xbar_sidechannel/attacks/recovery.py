"""
This module contains exact weight recovery from raw-output queries of a linear crossbar
"""
import typing

import numpy as np

import xbar_sidechannel.crossbar as crossbar
import xbar_sidechannel.enums as enums
import xbar_sidechannel.errors as errors
import xbar_sidechannel.linalg_stats as linalg_stats


def stack_queries(
        queries: typing.Sequence[crossbar.QueryRecord], num_inputs: int
) -> typing.Tuple[np.ndarray, np.ndarray]:
    """
    Stacks raw-output queries into an input matrix U (Q x N) and an output matrix Ŷ (Q x M)
    :param queries: the query records, all in RAW_OUTPUT mode
    :param num_inputs: N, the expected input length
    """
    if not queries:
        raise errors.EmptyInputError("Weight recovery needs at least one query")

    for index, record in enumerate(queries):
        if record.output is None:
            raise errors.QueryModeError(
                "Query {} has no raw output ({} mode); recovery needs raw outputs".format(index, record.mode.value)
            )
        if record.input.size != num_inputs:
            raise errors.ShapeMismatchError(
                "Query {} does not match the input size".format(index), record.input.shape, (num_inputs,)
            )

    inputs = np.vstack([record.input for record in queries])
    outputs = np.vstack([record.output for record in queries])
    return inputs, outputs


def recover_weights_exact(queries: typing.Sequence[crossbar.QueryRecord], num_inputs: int) -> np.ndarray:
    """
    Returns the least-squares weight estimate from raw outputs of a linear crossbar: Ŷ = U Wᵀ, so Wᵀ = U†Ŷ.
    With Q >= N queries whose inputs have full column rank the recovery is exact
    :param queries: RAW_OUTPUT query records from a linear crossbar
    :param num_inputs: N
    """
    for index, record in enumerate(queries):
        if record.activation not in (None, enums.Activation.LINEAR):
            raise errors.QueryModeError(
                "Query {} came from a {} crossbar; exact recovery needs linear outputs".format(
                    index, record.activation.value
                )
            )

    inputs, outputs = stack_queries(queries, num_inputs)
    return linalg_stats.matmul(linalg_stats.pseudoinverse(inputs), outputs).T


def basis_probe_queries(oracle: crossbar.CrossbarInstance, beta: typing.Optional[float] = None) -> typing.List[crossbar.QueryRecord]:
    """
    Queries the oracle with u = β·e_j for every input j.
    For a linear crossbar every answer is β times one column of W
    :param oracle: the crossbar under attack
    :param beta: the probe amplitude, defaults to vdd
    """
    beta = oracle.vdd if beta is None else beta
    records = []
    probe = np.zeros(oracle.num_inputs)
    for j in range(oracle.num_inputs):
        probe[j] = beta
        records.append(oracle.oracle_query(probe, enums.QueryMode.RAW_OUTPUT, with_power=False))
        probe[j] = 0.0
    return records


def relative_recovery_error(recovered: np.ndarray, weights: np.ndarray) -> float:
    """
    Returns ‖Ŵ - W‖_F / ‖W‖_F
    """
    norm = np.linalg.norm(weights)
    if norm == 0.0:
        return float(np.linalg.norm(recovered))
    return float(np.linalg.norm(recovered - weights) / norm)
