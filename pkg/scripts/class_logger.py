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

from datetime import datetime
from re import compile
from threading import Lock

esc_codes = compile(r'\x1B(?:[@-Z\\-_]|\[[0-?]*[ -/]*[@-~])')


class Logger:
	"""
	Simple class for .txt logging of experiment runs.
	Initialize with path to .txt log file.
	Use .log(str) to write to file, .log(str, to_print=True) to echo it.
	Use .close() to close the file, or use it as a context manager.
	"""

	def __init__(self, path: str):
		self.path = path
		self.file = open(path, 'w', encoding='utf-8')
		self.lock = Lock()

	def log(self, string: str, to_print=False) -> bool:
		try:
			stamp = datetime.now().strftime('%H:%M:%S')

			# compare/sweep workers share one log
			with self.lock:
				self.file.write(f'{stamp} -> {self.strip_esc_codes(string)}\n')
				self.file.flush()

			if to_print:
				print(string)

			return True

		except (IOError, ValueError):
			return False

	def strip_esc_codes(self, string: str) -> str:
		return esc_codes.sub('', string)

	def close(self):
		self.file.close()

	def __enter__(self):
		return self

	def __exit__(self, *exc):
		self.close()
		return False
