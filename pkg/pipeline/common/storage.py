"""Utilities for reading and writing files across data stores.
"""

# Standard library imports
import io
import os
from abc import ABC, abstractmethod
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Union

# Third-party imports
from django.conf import settings

PathLike = Union[Path, str]


class IDataStore(ABC):
    """Abstract class for accessing file systems that hold pipeline
    artifacts (rasters, lookup tables, weight containers, manifests).
    """

    @abstractmethod
    def resolve(
        self, file_name: PathLike, root_dir: Optional[PathLike] = None
    ) -> Path:
        """Resolves a file name against the root directory. Absolute
        file names are returned unchanged.

        Args:
            file_name (`pathlib.Path` | `str`): The file name.

            root_dir (`pathlib.Path` | `str`): The root directory.
                Defaults to the data directory in the Django settings.

        Returns:
            (`pathlib.Path`): The resolved path.
        """
        raise NotImplementedError

    @abstractmethod
    @contextmanager
    def open_file(
        self,
        file_name: PathLike,
        mode: str = "r",
        root_dir: Optional[PathLike] = None,
    ) -> Iterator[io.IOBase]:
        """Opens a file with the given name and mode.

        Args:
            file_name (`pathlib.Path` | `str`): The file name, relative
                to the root directory or absolute.

            mode (`str`): The file opening method. Defaults to
                reading text ("r").

            root_dir (`pathlib.Path` | `str`): The root directory.
                Defaults to the data directory in the Django settings.

        Yields:
            (`io.IOBase`): A file object.
        """
        raise NotImplementedError


class LocalDataStore(IDataStore):
    """Concrete class for accessing local file systems."""

    def resolve(
        self, file_name: PathLike, root_dir: Optional[PathLike] = None
    ) -> Path:
        """Resolves a file name against the root directory. Absolute
        file names are returned unchanged.

        Args:
            file_name (`pathlib.Path` | `str`): The file name.

            root_dir (`pathlib.Path` | `str`): The root directory.
                Defaults to the data directory in the Django settings.

        Returns:
            (`pathlib.Path`): The resolved path.
        """
        root = Path(root_dir) if root_dir is not None else settings.DATA_DIR
        return Path(root) / file_name

    @contextmanager
    def open_file(
        self,
        file_name: PathLike,
        mode: str = "r",
        root_dir: Optional[PathLike] = None,
    ) -> Iterator[io.IOBase]:
        """Opens a file with the given name and mode. Parent
        directories are created when the file is opened for writing.

        Args:
            file_name (`pathlib.Path` | `str`): The file name.

            mode (`str`): The file opening method. Defaults to
                reading text ("r").

            root_dir (`pathlib.Path` | `str`): The root directory.
                Defaults to the data directory in the Django settings.

        Yields:
            (`io.IOBase`): A file object.
        """
        # Resolve file path
        fpath = self.resolve(file_name, root_dir)

        # Create file's parent directories if writing
        if any(flag in mode for flag in ("w", "a", "x")):
            fpath.parent.mkdir(parents=True, exist_ok=True)

        # Detect UTF-8 BOM encoding for text reads
        encoding = None
        if "b" not in mode:
            encoding = "utf-8"
            if "r" in mode:
                with open(fpath, "rb") as f:
                    if f.read(3) == b"\xef\xbb\xbf":
                        encoding = "utf-8-sig"

        # Open file
        f = open(fpath, mode, encoding=encoding)

        # Yield file
        try:
            yield f
        finally:
            f.close()


class IDataStoreFactory:
    """Factory for fetching a singleton data store for the environment."""

    _helper: Optional[IDataStore] = None

    @staticmethod
    def get() -> IDataStore:
        """Fetches a file system helper based on the current name of
        the environment (e.g., "DEV" or "PROD").

        Raises:
            `RuntimeError` if the "ENV" variable names an
                unsupported environment.

        Returns:
            (`IDataStore`)
        """
        if not IDataStoreFactory._helper:
            env = os.environ.get("ENV", "DEV")
            if env in ("DEV", "PROD"):
                IDataStoreFactory._helper = LocalDataStore()
            else:
                raise RuntimeError(
                    "Unable to instantiate an `IDataStore`. Invalid "
                    f"environment variable passed for 'ENV': {env}."
                )
        return IDataStoreFactory._helper
