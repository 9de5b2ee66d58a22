"""
Model checkpoint file

Byte layout, all integers little-endian:
    bytes 0-3    magic b'GFCK'
    bytes 4-7    uint32 header length H
    bytes 8..8+H UTF-8 JSON header: model config, training config, normalization statistics,
                 case name, bus ids, edge pairs, parameter count and a tensor table
                 [{"name", "shape", "offset"}] with offsets counted in float64 elements
    rest         float64 ('<f8') values of every tensor in table order, row-major
"""

import dataclasses
import json
import logging
import struct

import numpy as np

from .exceptions import ContractError
from .grid import EdgeIndex
from .model import GnnConfig, init_params
from .training import NormStats
from .utils import atomic_write


MAGIC = b'GFCK'
FORMAT_VERSION = 1


@dataclasses.dataclass
class Checkpoint:
    params: object
    norm: NormStats
    edges: EdgeIndex
    case: str
    bus_ids: tuple
    train_cfg: dict = dataclasses.field(default_factory=dict)
    best_epoch: int = 0
    best_val_loss: float = None

    @property
    def model_cfg(self):
        return self.params.cfg

    @property
    def arch(self):
        return self.params.cfg.arch


def save_checkpoint(path, ckpt):
    """
    :param path: output file
    :param ckpt: Checkpoint
    """
    logger = logging.getLogger('gridflow.checkpoint')
    tensors = []
    blobs = []
    offset = 0
    for name, value in ckpt.params.snapshot():
        value = np.ascontiguousarray(value, dtype='<f8')
        tensors.append({'name': name, 'shape': list(value.shape), 'offset': offset})
        blobs.append(value.tobytes())
        offset += value.size
    header = {
        'format_version': FORMAT_VERSION,
        'arch': ckpt.arch,
        'model': ckpt.model_cfg.to_dict(),
        'train': ckpt.train_cfg,
        'norm': ckpt.norm.to_dict(),
        'case': ckpt.case,
        'bus_ids': list(ckpt.bus_ids),
        'edges': [list(pair) for pair in ckpt.edges.pairs],
        'parameter_count': ckpt.params.parameter_count(),
        'best_epoch': ckpt.best_epoch,
        'best_val_loss': ckpt.best_val_loss,
        'tensors': tensors,
    }
    encoded = json.dumps(header, sort_keys=True).encode('utf-8')
    with atomic_write(path, 'wb') as f:
        f.write(MAGIC)
        f.write(struct.pack('<I', len(encoded)))
        f.write(encoded)
        for blob in blobs:
            f.write(blob)
    logger.info('Checkpoint written to %s (%s, %d parameters)', path, ckpt.arch, header['parameter_count'])


def read_header(path):
    with open(path, 'rb') as f:
        data = f.read()
    if data[:4] != MAGIC or len(data) < 8:
        raise ContractError('{0} is not a gridflow checkpoint.'.format(path))
    (length,) = struct.unpack('<I', data[4:8])
    header = json.loads(data[8:8 + length].decode('utf-8'))
    return header, data[8 + length:]


def load_checkpoint(path):
    """
    :param path: checkpoint file
    :return: Checkpoint
    """
    header, blob = read_header(path)
    if header.get('format_version') != FORMAT_VERSION:
        raise ContractError('Unsupported checkpoint version {0!r}.'.format(header.get('format_version')))
    values = np.frombuffer(blob, dtype='<f8')
    cfg = GnnConfig.from_dict(header['model'])
    params = init_params(0, cfg)
    snapshot = []
    for entry in header['tensors']:
        size = int(np.prod(entry['shape'])) if entry['shape'] else 1
        if entry['offset'] + size > values.size:
            raise ContractError('Checkpoint {0} is truncated.'.format(path))
        chunk = values[entry['offset']:entry['offset'] + size].astype(np.float64)
        snapshot.append((entry['name'], chunk.reshape(entry['shape'])))
    params.restore(snapshot)
    return Checkpoint(params=params, norm=NormStats.from_dict(header['norm']),
                      edges=EdgeIndex(pairs=[tuple(p) for p in header['edges']]),
                      case=header['case'], bus_ids=tuple(header['bus_ids']), train_cfg=header.get('train', {}),
                      best_epoch=header.get('best_epoch', 0), best_val_loss=header.get('best_val_loss'))
