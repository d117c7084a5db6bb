"""
Model storage and persistence module
Saves fitted classifiers to JSON with run metadata and loads them back for prediction
"""

import json
import os
from datetime import datetime
from typing import Dict, Optional, Tuple

import logging

from src.classifiers import FittedClassifier
from src.dataset import LongitudinalDataset

FORMAT_VERSION = 1


class Storage:
    def __init__(self, config: Optional[Dict] = None):
        self.config = config or {}
        self.models_dir = self.config.get('paths', {}).get('models', 'models')
        self.logger = logging.getLogger(__name__)

    def save_model(self, fitted: FittedClassifier, path: Optional[str] = None,
                   train: Optional[LongitudinalDataset] = None, metadata: Optional[Dict] = None) -> str:
        """
        Save a fitted classifier

        Args:
            fitted: model returned by ClassifierPipeline.fit
            path: target file (defaults to <models_dir>/<classifier>.json)
            train: training data, recorded as p, t and variable names
            metadata: extra entries (trimming, seed, source file)

        Returns:
            Path to saved file
        """
        if path is None:
            os.makedirs(self.models_dir, exist_ok=True)
            path = os.path.join(self.models_dir, f"{fitted.name}.json")
        else:
            directory = os.path.dirname(path)
            if directory:
                os.makedirs(directory, exist_ok=True)

        info = {'format_version': FORMAT_VERSION, 'timestamp': datetime.now().isoformat(), **(metadata or {})}
        if train is not None:
            info.update({'p': train.p, 't': train.t, 'variable_names': list(train.variable_names),
                         'n0': train.n0, 'n1': train.n1})

        with open(path, 'w', encoding='utf-8') as f:
            json.dump({'metadata': info, **fitted.to_dict()}, f, indent=2, default=str)

        self.logger.info(f"Saved {fitted.name} model to {path}")
        return path

    def load_model(self, path: str) -> Tuple[FittedClassifier, Dict]:
        """
        Load a model written by save_model

        Returns:
            (fitted classifier, metadata)
        """
        if not os.path.exists(path):
            raise FileNotFoundError(f"Model file not found: {path}")
        with open(path, 'r', encoding='utf-8') as f:
            data = json.load(f)

        metadata = data.pop('metadata', {})
        version = metadata.get('format_version', FORMAT_VERSION)
        if version != FORMAT_VERSION:
            raise ValueError(f"Unsupported model format version {version}")

        fitted = FittedClassifier.from_dict(data)
        self.logger.info(f"Loaded {fitted.name} model from {path}")
        return fitted, metadata

    def check_compatible(self, metadata: Dict, ds: LongitudinalDataset) -> None:
        """Prediction data must have the training dimensions"""
        for key, value in (('p', ds.p), ('t', ds.t)):
            if key in metadata and int(metadata[key]) != value:
                raise ValueError(f"model was trained with {key}={metadata[key]}, data has {key}={value}")


def save_model(fitted: FittedClassifier, path: str, train: Optional[LongitudinalDataset] = None,
               metadata: Optional[Dict] = None) -> str:
    return Storage().save_model(fitted, path, train, metadata)


def load_model(path: str) -> Tuple[FittedClassifier, Dict]:
    return Storage().load_model(path)
