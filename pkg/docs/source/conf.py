# -*- coding: utf-8 -*-
#
# pymorse documentation build configuration file
#
# This file is execfile()d with the current directory set to its containing
# dir. Only the values that differ from Sphinx's defaults are set here.

import sys
import os

# Document the checkout, not whatever copy happens to be installed.
sys.path.insert(0, os.path.abspath(os.path.join(os.pardir, os.pardir)))

extensions = ['sphinx.ext.autodoc', 'sphinx.ext.doctest',
              'sphinx.ext.viewcode', 'sphinx.ext.mathjax']

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'pymorse'
copyright = u'2026, pymorse authors'

try:
    from pymorse import __version__
    # The short X.Y version.
    version = '.'.join(__version__.split('.')[:2])
    # The full version, including alpha/beta/rc tags.
    release = __version__
except ImportError:
    version = release = 'dev'

exclude_patterns = []
pygments_style = 'sphinx'

autoclass_content = 'both'
autodoc_member_order = 'bysource'

html_theme = 'default'
htmlhelp_basename = 'pymorsedoc'

latex_documents = [
    ('index', 'pymorse.tex', u'pymorse Documentation',
     u'pymorse authors', 'manual'),
]

man_pages = [
    ('index', 'pymorse', u'pymorse Documentation',
     [u'pymorse authors'], 1)
]
