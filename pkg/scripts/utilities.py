"""
This is free software: you can redistribute it and/or modify
it under the terms of the GNU General Public License as published by
the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.

This package is distributed in the hope that it will be useful,
but WITHOUT ANY WARRANTY; without even the implied warranty of
MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE. See the
GNU General Public License for more details.

You should have received a copy of the GNU General Public License
along with this package. If not, you can get the GNU GPL from
https://www.gnu.org/licenses/gpl-3.0.en.html.
"""

import sys

from os import path, makedirs, replace, remove
from tempfile import NamedTemporaryFile
from traceback import format_exc
from class_console_printer import tag_print


EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2


class InvalidInputError(ValueError):
	"""Malformed input: shape mismatch, non-finite logits, bad identifiers or hyperparameters."""


class NumericalFailure(ArithmeticError):
	"""
	Non-finite quantity produced inside an optimizer step.
	Carries the iteration index and, for SPG-NM, the lambda in use.
	"""

	def __init__(self, message: str, iteration: int = None, lam: float = None):
		super().__init__(message)
		self.iteration = iteration
		self.lam = lam


class ConvergenceError(RuntimeError):
	"""Value iteration did not reach its stopping bound within the sweep cap."""


def cfg_get(cfg, section, name, type, default=None):
	try:
		s = cfg[section][name]
		if s == '':
			return default
		if type == str:
			return s
		elif type == bool:
			return s.strip().lower() in ('1', 'true', 'yes', 'on')
		else:
			return type(s)
	except KeyError:
		if default is not None:
			return default
		else:
			raise InvalidInputError(f'Value [{name}] not found for key [{section}] and default value not provided!')
	except ValueError:
		raise InvalidInputError(f'Value [{name}] in section [{section}] is not a valid {type.__name__}: [{cfg[section][name]}]')


def parse_list(string: str, type=float, sep=',') -> list:
	"""
	Parses comma separated flag values such as "pg,pg-hb" or "1e3,1e4".
	Empty items are dropped.
	"""
	items = [s.strip() for s in str(string).split(sep)]
	try:
		return [type(s) for s in items if s != '']
	except ValueError:
		raise InvalidInputError(f'Cannot parse [{string}] as a list of {type.__name__}')


def ensure_folder(folder_path):
	if folder_path and not path.exists(folder_path):
		makedirs(folder_path)


def atomic_write(destination: str, text: str):
	"""
	Writes text to a temporary file next to destination, then renames it
	over destination, so readers never see a partial file.
	"""
	folder = path.dirname(path.abspath(destination))
	ensure_folder(folder)

	with NamedTemporaryFile('w', dir=folder, prefix='.tmp_', suffix='.part', delete=False, encoding='utf-8', newline='') as f:
		f.write(text)
		tmp_path = f.name

	try:
		replace(tmp_path, destination)
	except OSError:
		remove(tmp_path)
		raise


def present_exception_and_exit(message='An exception has occurred! For more information see traceback below. Please report this issue to the maintainers:'):
	print(file=sys.stderr)
	tag_print('exception', message)
	print(file=sys.stderr)
	print(format_exc(), file=sys.stderr)
	sys.exit(EXIT_FAILURE)
