# Empty file - marks directory as Python package
